//! Dataset files: one JSON object per line,
//! `{"n": 8, "edges": [[0, 3], ...], "meta": {"diam": 2, "seed": 17}}`.
//! Edges are written in lexicographic order so output is byte-stable.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{diameter, Graph};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub diam: u32,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<GraphMeta>,
}

pub fn write_graph<W: Write>(out: &mut W, g: &Graph, meta: Option<GraphMeta>) -> Result<()> {
    let rec = Record {
        n: g.n(),
        edges: g.edges().into_iter().map(|(u, v)| [u, v]).collect(),
        meta,
    };
    serde_json::to_writer(&mut *out, &rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes graphs with `meta.seed` taken from `seeds` and the diameter computed here.
pub fn write_dataset<W: Write>(out: &mut W, graphs: &[Graph], seeds: &[u64]) -> Result<()> {
    if graphs.len() != seeds.len() {
        return Err(Error::shape("one seed per graph required"));
    }
    for (g, &seed) in graphs.iter().zip(seeds) {
        let meta = GraphMeta {
            diam: diameter(g),
            seed,
        };
        write_graph(out, g, Some(meta))?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<(Graph, Option<GraphMeta>)>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)?;
        let edges: Vec<(usize, usize)> = rec.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = Graph::from_edges(rec.n, &edges)
            .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        out.push((g, rec.meta));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format_is_sorted_and_compact() {
        let g = Graph::from_edges(4, &[(2, 3), (1, 0), (0, 2)]).unwrap();
        let mut buf = Vec::new();
        write_graph(&mut buf, &g, Some(GraphMeta { diam: 2, seed: 9 })).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"n\":4,\"edges\":[[0,1],[0,2],[2,3]],\"meta\":{\"diam\":2,\"seed\":9}}\n"
        );
    }

    #[test]
    fn reads_back_with_and_without_meta() {
        let text = "{\"n\":3,\"edges\":[[0,1]]}\n\n{\"n\":4,\"edges\":[],\"meta\":{\"diam\":0,\"seed\":1}}\n";
        let rows = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, Graph::from_edges(3, &[(0, 1)]).unwrap());
        assert_eq!(rows[0].1, None);
        assert_eq!(rows[1].1, Some(GraphMeta { diam: 0, seed: 1 }));
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(read_dataset("{\"n\":3,\"edges\":[[0,3]]}".as_bytes()).is_err());
        assert!(read_dataset("not json".as_bytes()).is_err());
    }
}
