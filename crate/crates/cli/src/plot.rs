//! Reshapes history and sweep CSVs into long format: the identifying columns,
//! then `metric,value`, one row per metric.

use std::io::{Read, Write};

use anyhow::{anyhow, bail, Result};

const SWEEP_KEYS: [&str; 8] = [
    "dataset",
    "qubits",
    "classes",
    "layers",
    "arithmetic",
    "loss",
    "epsilon",
    "kappa",
];
const SWEEP_METRICS: [&str; 3] = ["test_acc", "cert_acc", "pgd_acc"];
const HISTORY_KEYS: [&str; 3] = ["epoch", "kappa", "epsilon"];
const HISTORY_METRICS: [&str; 3] = ["loss", "clean_acc", "cert_frac"];

fn positions(header: &csv::StringRecord, names: &[&str]) -> Option<Vec<usize>> {
    names
        .iter()
        .map(|n| header.iter().position(|h| h == *n))
        .collect()
}

/// Converts a sweep or history CSV to long format. Returns the number of
/// data rows written.
pub fn emit_plot_data(input: impl Read, output: impl Write) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| anyhow!("malformed CSV header: {e}"))?
        .clone();
    let (keys, metrics) = if let (Some(k), Some(m)) = (positions(&header, &SWEEP_KEYS), positions(&header, &SWEEP_METRICS)) {
        ((SWEEP_KEYS.as_slice(), k), (SWEEP_METRICS.as_slice(), m))
    } else if let (Some(k), Some(m)) = (positions(&header, &HISTORY_KEYS), positions(&header, &HISTORY_METRICS)) {
        ((HISTORY_KEYS.as_slice(), k), (HISTORY_METRICS.as_slice(), m))
    } else {
        bail!("line 1: header is neither a sweep table nor a training history");
    };

    let mut writer = csv::Writer::from_writer(output);
    let mut out_header: Vec<&str> = keys.0.to_vec();
    out_header.extend(["metric", "value"]);
    writer.write_record(&out_header)?;

    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(p) => anyhow!("line {}: malformed CSV: {e}", p.line()),
            None => anyhow!("malformed CSV: {e}"),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let key_values: Vec<&str> = keys.1.iter().map(|&i| &record[i]).collect();
        for (name, &i) in metrics.0.iter().zip(&metrics.1) {
            let raw = &record[i];
            raw.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("line {line}: column '{name}' is not a number: '{raw}'"))?;
            let mut row = key_values.clone();
            row.extend([*name, raw]);
            writer.write_record(&row)?;
            rows += 1;
        }
    }
    writer.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = "\
dataset,qubits,classes,layers,arithmetic,loss,epsilon,kappa,test_acc,cert_acc,pgd_acc,seed,wall_time
mnist,4,2,2,affine,margin,0.001,0.5,0.97,0.96,0.965,1,10.0
mnist,4,2,2,affine,margin,0.005,0.5,0.96,0.93,0.95,2,10.0
mnist,4,2,2,affine,margin,0.01,0.5,0.95,0.87,0.91,3,10.0
";

    fn run(input: &str) -> Result<String> {
        let mut out = Vec::new();
        emit_plot_data(input.as_bytes(), &mut out)?;
        Ok(String::from_utf8(out).unwrap())
    }

    #[test]
    fn sweep_becomes_nine_tidy_rows() {
        let out = run(SWEEP).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "dataset,qubits,classes,layers,arithmetic,loss,epsilon,kappa,metric,value");
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[1], "mnist,4,2,2,affine,margin,0.001,0.5,test_acc,0.97");
    }

    #[test]
    fn empty_history_gives_header_only() {
        let out = run("epoch,kappa,epsilon,loss,clean_acc,cert_frac\n").unwrap();
        assert_eq!(out, "epoch,kappa,epsilon,metric,value\n");
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let bad = SWEEP.replace("0.96,0.93", "0.96,oops");
        let err = run(&bad).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let ragged = format!("{SWEEP}mnist,4\n");
        let err = run(&ragged).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
        assert!(run("a,b\n1,2\n").is_err());
    }
}
