//! Delimited-text output for experiment results.
//!
//! Records: one line per record, columns in [`RECORD_HEADER`] order.
//! Summary: one line per (model, setting) with the mean and sample standard
//! deviation over the records of that group, in order of first appearance.
//! Missing values are written as `NA`; floats use the shortest
//! representation that parses back to the same value.

use std::fmt::Write as _;

use super::{Curve, ExperimentResult, Record};

pub const RECORD_HEADER: &str = "protocol,model,setting,value,repeat,fold,seed,k,chosen_k,n_test,train_mse,\
test_mse,variance_ratio,rowavg_test_mse,rowavg_variance_ratio,volume_fallbacks,wall_seconds";

fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x}")
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "NA".into(), |v| v.to_string())
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

/// Wall time is `NA` unless `timings` is set, so that reruns are
/// byte-identical.
pub fn render_records(result: &ExperimentResult, timings: bool) -> String {
    let mut out = format!("{RECORD_HEADER}\n");
    for r in &result.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            result.protocol.name(),
            r.model,
            r.setting,
            num(r.value),
            r.repeat,
            r.fold,
            r.seed,
            r.k,
            opt(r.chosen_k),
            r.n_test,
            num(r.train_mse),
            opt_num(r.test_mse),
            opt_num(r.variance_ratio),
            opt_num(r.rowavg_test_mse),
            opt_num(r.rowavg_variance_ratio),
            r.volume_fallbacks,
            if timings { num(r.wall_seconds) } else { "NA".into() },
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub setting: String,
    pub n: usize,
    pub train_mse: (f64, f64),
    pub test_mse: Option<(f64, f64)>,
    pub variance_ratio: Option<(f64, f64)>,
    pub rowavg_test_mse: Option<(f64, f64)>,
    pub chosen_k: Option<(f64, f64)>,
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn column(rs: &[&Record], f: impl Fn(&Record) -> Option<f64>) -> Option<(f64, f64)> {
    let xs: Option<Vec<f64>> = rs.iter().map(|r| f(r)).collect();
    xs.map(|v| mean_sd(&v))
}

pub fn summarise(records: &[Record]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let key = (r.model.clone(), r.setting_label());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(model, setting)| {
            let group: Vec<&Record> =
                records.iter().filter(|r| r.model == model && r.setting_label() == setting).collect();
            SummaryRow {
                n: group.len(),
                train_mse: column(&group, |r| Some(r.train_mse)).expect("always present"),
                test_mse: column(&group, |r| r.test_mse),
                variance_ratio: column(&group, |r| r.variance_ratio),
                rowavg_test_mse: column(&group, |r| r.rowavg_test_mse),
                chosen_k: column(&group, |r| r.chosen_k.map(|k| k as f64)),
                model,
                setting,
            }
        })
        .collect()
}

pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "model,setting,n,mean_train_mse,sd_train_mse,mean_test_mse,sd_test_mse,mean_variance_ratio,\
sd_variance_ratio,mean_rowavg_test_mse,sd_rowavg_test_mse,mean_chosen_k,sd_chosen_k\n",
    );
    let pair = |p: Option<(f64, f64)>| match p {
        Some((m, s)) => format!("{},{}", num(m), num(s)),
        None => "NA,NA".into(),
    };
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model,
            r.setting,
            r.n,
            pair(Some(r.train_mse)),
            pair(r.test_mse),
            pair(r.variance_ratio),
            pair(r.rowavg_test_mse),
            pair(r.chosen_k),
        )
        .unwrap();
    }
    out
}

/// Mean training-MSE curves: `model,iteration,mean_training_mse`.
pub fn render_curves(curves: &[Curve]) -> String {
    let mut out = String::from("model,iteration,mean_training_mse\n");
    for c in curves {
        for (t, m) in c.mean_mse.iter().enumerate() {
            writeln!(out, "{},{},{}", c.model, t + 1, num(*m)).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::Protocol;
    use super::*;

    fn rec(model: &str, value: f64, test: f64) -> Record {
        Record {
            model: model.into(),
            setting: "fraction",
            value,
            repeat: 0,
            fold: 0,
            seed: 1,
            k: 5,
            chosen_k: None,
            n_test: 3,
            train_mse: 1.0,
            test_mse: Some(test),
            variance_ratio: Some(2.0),
            rowavg_test_mse: None,
            rowavg_variance_ratio: None,
            volume_fallbacks: 0,
            wall_seconds: 0.25,
        }
    }

    #[test]
    fn summary_groups_and_moments() {
        let rs = vec![rec("GGG", 0.2, 1.0), rec("GGG", 0.5, 7.0), rec("GGG", 0.2, 3.0)];
        let s = summarise(&rs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].setting, "fraction=0.2");
        assert_eq!(s[0].n, 2);
        assert_eq!(s[0].test_mse, Some((2.0, 2f64.sqrt())));
        assert_eq!(s[1].test_mse, Some((7.0, 0.0)));
        assert_eq!(s[0].rowavg_test_mse, None);
        let text = render_summary(&s);
        assert!(text.lines().nth(1).unwrap().starts_with("GGG,fraction=0.2,2,1,0,2,1.4142135623730951,2,0,NA,NA,NA,NA"));
    }

    #[test]
    fn summary_recomputable_from_rendered_records() {
        let rs = vec![rec("GEG", 0.2, 0.1 + 0.2), rec("GEG", 0.2, 1.0 / 3.0)];
        let res = ExperimentResult { protocol: Protocol::Sparsity, records: rs, curves: vec![] };
        let text = render_records(&res, false);
        let parsed: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(11).unwrap().parse().unwrap()).collect();
        let (m, _) = mean_sd(&parsed);
        assert_eq!(Some(m), summarise(&res.records)[0].test_mse.map(|p| p.0));
        assert!(text.lines().nth(1).unwrap().ends_with(",0,NA"));
        assert!(render_records(&res, true).lines().nth(1).unwrap().ends_with(",0,0.25"));
    }
}
