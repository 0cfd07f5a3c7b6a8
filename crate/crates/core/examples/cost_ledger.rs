//! Price token usage with exact decimal arithmetic.
//!
//!     cargo run --example cost_ledger

use synthkit::llm::{cost_of, CostLedger, ModelPrice, PriceTable, TokenUsage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut table = PriceTable::default();
    table.insert(
        "gpt-3.5-turbo-0301",
        ModelPrice { input_price_per_1k: "0.0015".parse()?, output_price_per_1k: "0.002".parse()? },
    );

    let one = TokenUsage { prompt_tokens: 1000, completion_tokens: 1000 };
    println!("1k in + 1k out: ${}", cost_of(one, "gpt-3.5-turbo-0301", &table)?);

    let mut ledger = CostLedger::default();
    for (p, c) in [(312, 48), (298, 61), (1204, 233)] {
        let usage = TokenUsage { prompt_tokens: p, completion_tokens: c };
        let cost = ledger.charge(usage, "gpt-3.5-turbo-0301", &table)?;
        println!("call {p:>5} + {c:>4} tokens: ${cost}");
    }
    println!("{} calls, {:?}, total ${}", ledger.calls, ledger.usage, ledger.cost_usd);

    match cost_of(one, "unknown-model", &table) {
        Ok(_) => unreachable!(),
        Err(e) => println!("unpriced model: {e}"),
    }
    Ok(())
}
