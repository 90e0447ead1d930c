//! Embedding text format: a `<count> <dim>` header, then
//! `key<TAB>v1 v2 ... v_dim` per row. Values are written in Rust's shortest
//! round-trip form, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use recipekg_core::embed::EmbeddingTable;

use super::{data_lines, origin, read_text, write_bytes};
use crate::error::{format_err, parse_err, Result};

pub fn parse_embeddings(text: &str, origin: &str) -> Result<EmbeddingTable> {
    let mut lines = data_lines(text);
    let (no, header) = lines
        .next()
        .ok_or_else(|| format_err(origin, "missing `<count> <dim>` header"))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| parse_err(origin, no, format!("header `{header}`: {e}")));
    if nums.len() != 2 {
        return Err(parse_err(origin, no, format!("header `{header}` is not `<count> <dim>`")));
    }
    let (count, dim) = (parse_usize(nums[0])?, parse_usize(nums[1])?);
    if dim == 0 {
        return Err(parse_err(origin, no, "dimension must be positive"));
    }
    let mut table = EmbeddingTable::new(dim);
    for (no, line) in lines {
        let (key, values) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(origin, no, "expected `key<TAB>values`"))?;
        let row = values
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| parse_err(origin, no, format!("`{key}`: value `{v}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != dim {
            return Err(parse_err(
                origin,
                no,
                format!("`{key}` has {} values, header says {dim}", row.len()),
            ));
        }
        table.insert(key, row).map_err(|e| parse_err(origin, no, e))?;
    }
    if table.len() != count {
        return Err(format_err(
            origin,
            format!("header declares {count} rows, found {}", table.len()),
        ));
    }
    Ok(table)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    parse_embeddings(&read_text(path)?, &origin(path))
}

pub fn embeddings_to_text(table: &EmbeddingTable) -> String {
    let mut out = format!("{} {}\n", table.len(), table.dim());
    for (key, row) in table.iter() {
        out.push_str(key);
        for (i, v) in row.iter().enumerate() {
            out.push(if i == 0 { '\t' } else { ' ' });
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    write_bytes(path, embeddings_to_text(table).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row() {
        let t = parse_embeddings("1 2\nRCP:1\t0.5 0.5\n", "e").unwrap();
        assert_eq!(t.get("RCP:1").unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn count_mismatch() {
        assert!(parse_embeddings("2 2\nRCP:1\t0.5 0.5\n", "e").is_err());
    }

    #[test]
    fn width_mismatch_names_key() {
        let err = parse_embeddings("1 2\nRCP:9\t0.5\n", "e").unwrap_err();
        assert!(err.to_string().contains("RCP:9"));
    }

    #[test]
    fn duplicate_key() {
        assert!(parse_embeddings("2 1\nRCP:1\t1\nRCP:1\t2\n", "e").is_err());
    }
}
