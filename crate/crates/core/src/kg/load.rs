use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, KgError, KnowledgeGraph, Node};

/// Which header columns carry node and edge fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub node_id: String,
    pub node_name: String,
    pub node_type: String,
    pub edge_head: String,
    pub edge_relation: String,
    pub edge_tail: String,
    /// Field delimiter; inferred from the extension when unset (`.csv` is
    /// comma, anything else tab).
    pub delimiter: Option<char>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            node_id: "id".into(),
            node_name: "name".into(),
            node_type: "type".into(),
            edge_head: "head".into(),
            edge_relation: "relation".into(),
            edge_tail: "tail".into(),
            delimiter: None,
        }
    }
}

impl ColumnMap {
    /// Parses `key=column` pairs separated by commas, e.g.
    /// `id=primary,name=label,type=kind`. Unset keys keep their defaults.
    pub fn parse_overrides(spec: &str) -> Result<Self, String> {
        let mut map = Self::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=column, got {part:?}"))?;
            let v = v.trim().to_string();
            match k.trim() {
                "id" => map.node_id = v,
                "name" => map.node_name = v,
                "type" => map.node_type = v,
                "head" => map.edge_head = v,
                "relation" => map.edge_relation = v,
                "tail" => map.edge_tail = v,
                "delimiter" => {
                    map.delimiter = Some(match v.as_str() {
                        "tab" | "\\t" => '\t',
                        "comma" => ',',
                        s if s.chars().count() == 1 => s.chars().next().unwrap(),
                        s => return Err(format!("bad delimiter {s:?}")),
                    })
                }
                other => return Err(format!("unknown column key {other:?}")),
            }
        }
        Ok(map)
    }

    fn delimiter_for(&self, path: &Path) -> u8 {
        let c = self.delimiter.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ',',
            _ => '\t',
        });
        c as u8
    }
}

fn read_table(path: &Path, delimiter: u8, columns: &[&str]) -> Result<Vec<Vec<String>>, KgError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .quoting(delimiter == b',')
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == *c)
                .ok_or_else(|| KgError::MissingColumn { path: path.to_path_buf(), column: c.to_string() })
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(idx.iter().map(|&i| rec.get(i).unwrap_or("").trim().to_string()).collect());
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> KgError {
    match e.kind() {
        csv::ErrorKind::Io(_) => KgError::Io {
            path: path.to_path_buf(),
            source: match e.into_kind() {
                csv::ErrorKind::Io(io) => io,
                _ => unreachable!(),
            },
        },
        _ => KgError::Csv { path: path.to_path_buf(), message: e.to_string() },
    }
}

/// Loads a typed graph from a node file and an edge file, each with a header
/// row.
pub fn load_kg(node_file: &Path, edge_file: &Path, columns: &ColumnMap) -> Result<KnowledgeGraph, KgError> {
    let node_rows =
        read_table(node_file, columns.delimiter_for(node_file), &[&columns.node_id, &columns.node_name, &columns.node_type])?;
    if node_rows.is_empty() {
        return Err(KgError::EmptyNodes(node_file.to_path_buf()));
    }
    let edge_rows = read_table(
        edge_file,
        columns.delimiter_for(edge_file),
        &[&columns.edge_head, &columns.edge_relation, &columns.edge_tail],
    )?;
    let nodes = node_rows
        .into_iter()
        .map(|mut r| Node { node_type: r.pop().unwrap(), name: r.pop().unwrap(), id: r.pop().unwrap() })
        .collect();
    let edges = edge_rows
        .into_iter()
        .map(|mut r| Edge { tail_id: r.pop().unwrap(), relation: r.pop().unwrap(), head_id: r.pop().unwrap() })
        .collect();
    let kg = KnowledgeGraph::from_parts(nodes, edges)?;
    if kg.stats().dropped_edges > 0 {
        log::warn!("{}: dropped {} dangling edge(s)", edge_file.display(), kg.stats().dropped_edges);
    }
    Ok(kg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::fmt::Write as _;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_tsv_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.tsv", "id\tname\ttype\nD1\taspirin\tdrug\nS1\tstroke\tdisease\nS2\tsepsis\tdisease\n");
        let e = write(dir.path(), "e.tsv", "head\trelation\ttail\nD1\ttreats\tS1\nD1\tcauses\tS2\n");
        let kg = load_kg(&n, &e, &ColumnMap::default()).unwrap();
        assert_eq!((kg.stats().nodes, kg.stats().edges), (3, 2));
    }

    #[test]
    fn dangling_endpoint_counted() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.tsv", "id\tname\ttype\na\tA\tt\nb\tB\tt\n");
        let e = write(dir.path(), "e.tsv", "head\trelation\ttail\na\tr\tb\na\tr\tmissing\n");
        let kg = load_kg(&n, &e, &ColumnMap::default()).unwrap();
        assert_eq!(kg.stats().edges, 1);
        assert_eq!(kg.stats().dropped_edges, 1);
    }

    #[test]
    fn csv_with_custom_columns() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "primary,label,kind\n1,\"heart, failure\",disease\n");
        let e = write(dir.path(), "e.csv", "x,rel,y\n");
        let cols = ColumnMap::parse_overrides("id=primary,name=label,type=kind,head=x,relation=rel,tail=y").unwrap();
        let kg = load_kg(&n, &e, &cols).unwrap();
        assert_eq!(kg.node("1").unwrap().name, "heart, failure");
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.tsv", "id\tlabel\ttype\na\tA\tt\n");
        let e = write(dir.path(), "e.tsv", "head\trelation\ttail\n");
        match load_kg(&n, &e, &ColumnMap::default()) {
            Err(KgError::MissingColumn { column, .. }) => assert_eq!(column, "name"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_node_file_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.tsv", "id\tname\ttype\n");
        let e = write(dir.path(), "e.tsv", "head\trelation\ttail\n");
        assert!(matches!(load_kg(&n, &e, &ColumnMap::default()), Err(KgError::EmptyNodes(_))));
    }

    #[test]
    fn type_index_matches_group_by_over_raw_file() {
        let dir = tempfile::tempdir().unwrap();
        let types = ["disease", "drug", "gene", "symptom", "pathway"];
        let mut body = String::from("id\tname\ttype\n");
        // deterministic pseudo-random assignment
        let mut x: u64 = 12345;
        for i in 0..10_000 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let t = types[(x >> 33) as usize % types.len()];
            writeln!(body, "N{i}\tentity {i}\t{t}").unwrap();
        }
        let n = write(dir.path(), "n.tsv", &body);
        let e = write(dir.path(), "e.tsv", "head\trelation\ttail\n");
        let kg = load_kg(&n, &e, &ColumnMap::default()).unwrap();

        let mut oracle: BTreeMap<String, usize> = BTreeMap::new();
        for line in body.lines().skip(1) {
            let t = line.split('\t').nth(2).unwrap();
            *oracle.entry(t.to_string()).or_default() += 1;
        }
        for (t, count) in &oracle {
            assert_eq!(kg.nodes_of_type(t).unwrap().len(), *count, "type {t}");
        }
        assert_eq!(kg.types().len(), oracle.len());
    }

    #[test]
    fn column_override_parsing() {
        assert!(ColumnMap::parse_overrides("bogus=1").is_err());
        assert_eq!(ColumnMap::parse_overrides("delimiter=comma").unwrap().delimiter, Some(','));
    }
}
