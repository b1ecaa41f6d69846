//! GAL neighbor files.
//!
//! ```text
//! 0 3 grid region_code      (or "3 region_code", or just "3")
//! A 1
//! B
//! B 2
//! A C
//! C 1
//! B
//! ```
//!
//! Neighbor order is preserved, so a file written by [`save_gal`] loads back
//! into identical weights and re-saves byte for byte.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{SpatialWeights, WeightsError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalHeader {
    pub layer: Option<String>,
    pub id_variable: Option<String>,
}

fn format_err(line: usize, message: impl Into<String>) -> WeightsError {
    WeightsError::Format {
        line,
        message: message.into(),
    }
}

/// Parse a GAL file into binary weights.
pub fn load_gal<R: BufRead>(source: R) -> Result<(SpatialWeights, GalHeader), WeightsError> {
    let lines: Vec<String> = source.lines().collect::<Result<_, _>>()?;
    let mut cursor = lines.iter().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (line_no, header_line) = cursor
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| format_err(1, "empty GAL file"))?;
    let tokens: Vec<&str> = header_line.split_whitespace().collect();
    let parse_n = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| format_err(line_no, format!("invalid region count `{s}`")))
    };
    let (n, header) = match tokens.as_slice() {
        [n] => (parse_n(n)?, GalHeader::default()),
        [n, id] => (
            parse_n(n)?,
            GalHeader {
                layer: None,
                id_variable: Some((*id).to_string()),
            },
        ),
        ["0", n, layer, id] => (
            parse_n(n)?,
            GalHeader {
                layer: Some((*layer).to_string()),
                id_variable: Some((*id).to_string()),
            },
        ),
        _ => return Err(format_err(line_no, "unrecognized GAL header")),
    };

    struct Block<'a> {
        id: &'a str,
        line: usize,
        neighbors: Vec<&'a str>,
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(n);
    let mut pending = cursor.peekable();
    while let Some((line, text)) = pending.next() {
        if text.is_empty() {
            continue;
        }
        let head: Vec<&str> = text.split_whitespace().collect();
        let [id, count] = head.as_slice() else {
            return Err(format_err(line, "expected `<id> <neighbor count>`"));
        };
        let count: usize = count
            .parse()
            .map_err(|_| format_err(line, format!("invalid neighbor count `{count}`")))?;
        let neighbors = if count == 0 {
            // optional empty neighbor line
            if pending.peek().is_some_and(|(_, l)| l.is_empty()) {
                pending.next();
            }
            Vec::new()
        } else {
            let (nline, ntext) = pending
                .next()
                .ok_or_else(|| format_err(line, format!("region {id}: missing neighbor line")))?;
            let ids: Vec<&str> = ntext.split_whitespace().collect();
            if ids.len() != count {
                return Err(format_err(
                    nline,
                    format!("region {id}: declared {count} neighbors, found {}", ids.len()),
                ));
            }
            ids
        };
        blocks.push(Block { id, line, neighbors });
    }
    if blocks.len() != n {
        return Err(format_err(
            line_no,
            format!("header declares {n} regions, found {} blocks", blocks.len()),
        ));
    }

    let mut index = HashMap::with_capacity(n);
    for (i, b) in blocks.iter().enumerate() {
        if index.insert(b.id, i).is_some() {
            return Err(format_err(b.line, format!("duplicate region block `{}`", b.id)));
        }
    }
    let mut adjacency = Vec::with_capacity(n);
    for b in &blocks {
        let row = b
            .neighbors
            .iter()
            .map(|id| {
                index.get(id).copied().ok_or_else(|| WeightsError::UnknownNeighbor {
                    line: b.line + 1,
                    id: (*id).to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        adjacency.push(row);
    }
    let ids = blocks.iter().map(|b| b.id.to_string()).collect();
    let weights = SpatialWeights::from_adjacency(ids, adjacency)?;
    Ok((weights, header))
}

/// Write the neighbor structure (weights themselves are not stored).
pub fn save_gal<W: Write>(weights: &SpatialWeights, header: &GalHeader, mut sink: W) -> Result<(), WeightsError> {
    if let Some(bad) = weights.ids().iter().find(|id| id.is_empty() || id.contains(char::is_whitespace)) {
        return Err(WeightsError::Invalid(format!(
            "region id `{bad}` cannot be written to GAL"
        )));
    }
    match (&header.layer, &header.id_variable) {
        (Some(layer), Some(id)) => writeln!(sink, "0 {} {layer} {id}", weights.n())?,
        (None, Some(id)) => writeln!(sink, "{} {id}", weights.n())?,
        _ => writeln!(sink, "{}", weights.n())?,
    }
    for i in 0..weights.n() {
        writeln!(sink, "{} {}", weights.ids()[i], weights.cardinality(i))?;
        let row: Vec<&str> = weights
            .neighbors(i)
            .iter()
            .map(|&(j, _)| weights.ids()[j].as_str())
            .collect();
        writeln!(sink, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutual_pair() {
        let (w, header) = load_gal("2 CODE\nA 1\nB\nB 1\nA\n".as_bytes()).unwrap();
        assert!(w.is_symmetric());
        assert_eq!(w.neighbors(0), &[(1, 1.0)]);
        assert_eq!(header.id_variable.as_deref(), Some("CODE"));
    }

    #[test]
    fn unknown_neighbor_is_referential_error() {
        let err = load_gal("2\nA 1\nZ\nB 1\nA\n".as_bytes()).unwrap_err();
        assert!(matches!(err, WeightsError::UnknownNeighbor { line: 3, ref id } if id == "Z"), "{err}");
    }

    #[test]
    fn count_mismatch_is_format_error() {
        let err = load_gal("2\nA 2\nB\nB 1\nA\n".as_bytes()).unwrap_err();
        assert!(matches!(err, WeightsError::Format { line: 3, .. }), "{err}");
        let err = load_gal("3\nA 1\nB\nB 1\nA\n".as_bytes()).unwrap_err();
        assert!(matches!(err, WeightsError::Format { .. }), "{err}");
    }

    #[test]
    fn isolates_and_round_trip() {
        let text = "0 3 layer id\nA 1\nB\nB 1\nA\nC 0\n\n";
        let (w, header) = load_gal(text.as_bytes()).unwrap();
        assert!(w.is_isolate(2));
        let mut out = Vec::new();
        save_gal(&w, &header, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
