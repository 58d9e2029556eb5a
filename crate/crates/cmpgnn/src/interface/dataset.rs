//! Dataset text formats: tab-separated edges, comma-separated features and
//! labels, plus a JSON meta file declaring the node count.
//!
//! Feature values are written with Rust's shortest round-trip formatting, so
//! an exported graph reloads bitwise identical.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graphstore::{build_graph, DomainTag, Graph};
use crate::numkernel::DenseMatrix;

/// File locations and the declared node count for one domain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBundle {
    pub edges: PathBuf,
    pub features: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub nodes: usize,
}

fn parse_err(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: format!("{}: {}", path.display(), message),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {}", path.display(), e),
        ))
    })?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line?);
    }
    // A single trailing newline is not a record.
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

/// Parse and validate one domain's files into a [`Graph`].
pub fn load_dataset(bundle: &DatasetBundle, domain: DomainTag) -> Result<Graph> {
    let mut edges = Vec::new();
    for (idx, line) in read_lines(&bundle.edges)?.iter().enumerate() {
        let lineno = idx + 1;
        let mut parts = line.split('\t');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(parse_err(
                    &bundle.edges,
                    lineno,
                    "expected exactly two tab-separated node ids",
                ))
            }
        };
        let a: usize = a
            .trim()
            .parse()
            .map_err(|e| parse_err(&bundle.edges, lineno, e))?;
        let b: usize = b
            .trim()
            .parse()
            .map_err(|e| parse_err(&bundle.edges, lineno, e))?;
        edges.push((a, b));
    }

    let feature_lines = read_lines(&bundle.features)?;
    if feature_lines.len() != bundle.nodes {
        return Err(Error::Validation(format!(
            "{}: {} feature rows for {} declared nodes",
            bundle.features.display(),
            feature_lines.len(),
            bundle.nodes
        )));
    }
    let mut width = None;
    let mut values = Vec::new();
    for (idx, line) in feature_lines.iter().enumerate() {
        let lineno = idx + 1;
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(&bundle.features, lineno, e))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    &bundle.features,
                    lineno,
                    format!("ragged row: {} values, expected {}", row.len(), w),
                ))
            }
            _ => {}
        }
        values.extend(row);
    }
    let features = DenseMatrix::from_vec(bundle.nodes, width.unwrap_or(0), values)?;

    let labels = match &bundle.labels {
        Some(path) => {
            let lines = read_lines(path)?;
            if lines.len() != bundle.nodes {
                return Err(Error::Validation(format!(
                    "{}: {} labels for {} declared nodes",
                    path.display(),
                    lines.len(),
                    bundle.nodes
                )));
            }
            let mut labels = Vec::with_capacity(lines.len());
            for (idx, line) in lines.iter().enumerate() {
                labels.push(
                    line.trim()
                        .parse::<usize>()
                        .map_err(|e| parse_err(path, idx + 1, e))?,
                );
            }
            Some(labels)
        }
        None => None,
    };

    build_graph(&edges, features, labels, domain)
}

/// Export a graph as dataset files under `dir` with the given name prefix:
/// `{prefix}_edges.tsv`, `{prefix}_features.csv`, `{prefix}_labels.csv`
/// (when labeled), and `{prefix}_meta.json`. Returns the bundle pointing at
/// them.
pub fn write_dataset(graph: &Graph, dir: &Path, prefix: &str) -> Result<DatasetBundle> {
    std::fs::create_dir_all(dir)?;
    let edges_path = dir.join(format!("{}_edges.tsv", prefix));
    let features_path = dir.join(format!("{}_features.csv", prefix));
    let labels_path = dir.join(format!("{}_labels.csv", prefix));
    let meta_path = dir.join(format!("{}_meta.json", prefix));

    let mut w = std::io::BufWriter::new(std::fs::File::create(&edges_path)?);
    for (r, c, _) in graph.adjacency().iter_entries() {
        if r < c {
            writeln!(w, "{}\t{}", r, c)?;
        }
    }
    w.flush()?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(&features_path)?);
    for r in 0..graph.node_count() {
        let row: Vec<String> = graph.features().row(r).iter().map(|v| format!("{:?}", v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    let labels = match graph.labels() {
        Some(labels) => {
            let mut w = std::io::BufWriter::new(std::fs::File::create(&labels_path)?);
            for l in labels {
                writeln!(w, "{}", l)?;
            }
            w.flush()?;
            Some(labels_path)
        }
        None => None,
    };

    let meta = serde_json::json!({
        "nodes": graph.node_count(),
        "feature_dim": graph.feature_dim(),
        "domain": graph.domain().to_string(),
        "edges": graph.edge_count(),
    });
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?.as_bytes())?;

    Ok(DatasetBundle {
        edges: edges_path,
        features: features_path,
        labels,
        nodes: graph.node_count(),
    })
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn three_node_fixture_loads() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = DatasetBundle {
            edges: write(dir.path(), "e.tsv", "0\t1\n"),
            features: write(dir.path(), "x.csv", "1.0,2.0\n3.0,4.0\n5.0,6.0\n"),
            labels: Some(write(dir.path(), "y.csv", "0\n1\n0\n")),
            nodes: 3,
        };
        let g = load_dataset(&bundle, DomainTag::Source).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.adjacency().get(1, 0), 1.0);
        assert_eq!(g.labels(), Some(&[0, 1, 0][..]));
    }

    #[test]
    fn ragged_feature_row_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = DatasetBundle {
            edges: write(dir.path(), "e.tsv", ""),
            features: write(dir.path(), "x.csv", "1.0,2.0\n3.0\n"),
            labels: None,
            nodes: 2,
        };
        match load_dataset(&bundle, DomainTag::Source) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("ragged"), "{}", message);
            }
            other => panic!("expected parse error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn bad_edge_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = DatasetBundle {
            edges: write(dir.path(), "e.tsv", "0\t1\n2 3\n"),
            features: write(dir.path(), "x.csv", "1.0\n2.0\n3.0\n4.0\n"),
            labels: None,
            nodes: 4,
        };
        match load_dataset(&bundle, DomainTag::Source) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn declared_node_count_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = DatasetBundle {
            edges: write(dir.path(), "e.tsv", ""),
            features: write(dir.path(), "x.csv", "1.0\n2.0\n"),
            labels: None,
            nodes: 3,
        };
        assert!(matches!(
            load_dataset(&bundle, DomainTag::Source),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn generated_graph_round_trips_bitwise() {
        use crate::bridger::stream_rng;
        use crate::csbm::{generate_domain, CsbmSpec};
        let spec = CsbmSpec {
            num_classes: 2,
            class_counts: vec![6, 4],
            p_intra: 0.4,
            p_inter: 0.1,
            class_means: vec![vec![0.0, 1.0, -0.5], vec![2.0, -1.0, 0.25]],
            class_stddevs: vec![1.0, 0.7],
            feature_dim: 3,
            seed: 5,
        };
        let mut rng = stream_rng(5, 0, 0, 9);
        let g = generate_domain(&spec, DomainTag::Target, &mut rng).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let bundle = write_dataset(&g, dir.path(), "target").unwrap();
        let reloaded = load_dataset(&bundle, DomainTag::Target).unwrap();

        assert_eq!(g.adjacency(), reloaded.adjacency());
        assert_eq!(g.labels(), reloaded.labels());
        let bits = |m: &DenseMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.features()), bits(reloaded.features()));
    }
}
