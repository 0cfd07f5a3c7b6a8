use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};
use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::TokenUsage;
use crate::config::{load_structured, ConfigError};

/// USD per 1000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub input_price_per_1k: Decimal,
    pub output_price_per_1k: Decimal,
}

/// Prices keyed by model id. On disk:
///
/// ```toml
/// [models."gpt-3.5-turbo-0301"]
/// input_price_per_1k = "0.0015"
/// output_price_per_1k = "0.002"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelPrice>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("no price for model {0:?}")]
    UnknownModel(String),
    #[error("negative price for model {0:?}")]
    NegativePrice(String),
}

impl PriceTable {
    pub fn insert(&mut self, model_id: impl Into<String>, price: ModelPrice) {
        self.models.insert(model_id.into(), price);
    }

    pub fn validate(&self) -> Result<(), CostError> {
        match self
            .models
            .iter()
            .find(|(_, p)| p.input_price_per_1k.is_sign_negative() || p.output_price_per_1k.is_sign_negative())
        {
            Some((id, _)) => Err(CostError::NegativePrice(id.clone())),
            None => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let t: Self = load_structured(path)?;
        t.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(t)
    }

    pub fn get(&self, model_id: &str) -> Result<&ModelPrice, CostError> {
        self.models.get(model_id).ok_or_else(|| CostError::UnknownModel(model_id.to_string()))
    }
}

pub fn cost_of(usage: TokenUsage, model_id: &str, table: &PriceTable) -> Result<Decimal, CostError> {
    let p = table.get(model_id)?;
    let per_1k = Decimal::from(1000);
    let input = Decimal::from(usage.prompt_tokens) * p.input_price_per_1k / per_1k;
    let output = Decimal::from(usage.completion_tokens) * p.output_price_per_1k / per_1k;
    Ok(input + output)
}

/// Running totals of calls, tokens and cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub calls: u64,
    pub usage: TokenUsage,
    pub cost_usd: Decimal,
}

impl CostLedger {
    pub fn record(&mut self, usage: TokenUsage, cost: Decimal) {
        self.calls += 1;
        self.usage += usage;
        self.cost_usd += cost;
    }

    /// Records one call, pricing it from `table`.
    pub fn charge(&mut self, usage: TokenUsage, model_id: &str, table: &PriceTable) -> Result<Decimal, CostError> {
        let c = cost_of(usage, model_id, table)?;
        self.record(usage, c);
        Ok(c)
    }
}

impl Add for CostLedger {
    type Output = CostLedger;
    fn add(self, rhs: Self) -> Self {
        Self { calls: self.calls + rhs.calls, usage: self.usage + rhs.usage, cost_usd: self.cost_usd + rhs.cost_usd }
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for CostLedger {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    fn table() -> PriceTable {
        let mut t = PriceTable::default();
        t.insert(
            "m",
            ModelPrice {
                input_price_per_1k: Decimal::from_str("0.001").unwrap(),
                output_price_per_1k: Decimal::from_str("0.002").unwrap(),
            },
        );
        t
    }

    #[test]
    fn zero_usage_costs_nothing() {
        assert_eq!(cost_of(TokenUsage::default(), "m", &table()).unwrap(), Decimal::ZERO);
    }

    #[test]
    fn unit_arithmetic() {
        let u = TokenUsage { prompt_tokens: 1000, completion_tokens: 1000 };
        assert_eq!(cost_of(u, "m", &table()).unwrap(), Decimal::from_str("0.003").unwrap());
    }

    #[test]
    fn unknown_model() {
        assert_eq!(cost_of(TokenUsage::default(), "x", &table()), Err(CostError::UnknownModel("x".into())));
    }

    #[test]
    fn toml_accepts_strings_and_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prices.toml");
        std::fs::write(&p, "[models.a]\ninput_price_per_1k = \"0.0015\"\noutput_price_per_1k = 0.002\n").unwrap();
        let t = PriceTable::load(&p).unwrap();
        assert_eq!(t.get("a").unwrap().output_price_per_1k, Decimal::from_str("0.002").unwrap());
        std::fs::write(&p, "[models.a]\ninput_price_per_1k = \"-1\"\noutput_price_per_1k = 0\n").unwrap();
        assert!(PriceTable::load(&p).is_err());
    }

    #[test]
    fn ledger_split_sum() {
        let t = table();
        let usages: Vec<TokenUsage> =
            (0..101).map(|i| TokenUsage { prompt_tokens: 37 * i + 11, completion_tokens: 13 * i + 7 }).collect();
        let ledger = |us: &[TokenUsage]| {
            let mut l = CostLedger::default();
            for u in us {
                l.charge(*u, "m", &t).unwrap();
            }
            l
        };
        let whole = ledger(&usages);
        let (a, b) = usages.split_at(40);
        assert_eq!(ledger(a) + ledger(b), whole);
        assert_eq!(whole.calls, 101);
    }
}
