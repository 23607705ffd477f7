use std::path::Path;

use crate::diagnostics::{DiagnosticRow, GEWEKE_CONVENTIONAL, GEWEKE_STRICT};
use crate::error::Result;
use crate::eval::{ClassificationReport, CpoReport, Roc};
use crate::io::write_atomic;
use crate::simulator::ReplicationReport;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Posterior summary: `parameter,Mean,SD,2.5%,Median,97.5%`.
pub fn write_summary_table(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "parameter,Mean,SD,2.5%,Median,97.5%")?;
        for r in rows {
            let s = &r.summary;
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.name, s.mean, s.sd, s.q025, s.median, s.q975
            )?;
        }
        Ok(())
    })
}

/// Geweke z per parameter with pass/fail at both thresholds.
pub fn write_geweke_table(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "parameter,z,pass_{GEWEKE_STRICT},pass_{GEWEKE_CONVENTIONAL}")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.name,
                opt(r.geweke_z),
                r.passes(GEWEKE_STRICT),
                r.passes(GEWEKE_CONVENTIONAL)
            )?;
        }
        Ok(())
    })
}

/// LPML per model under both normalizations, plus per-individual log CPO
/// in a second file when `cpo_path` is given.
pub fn write_comparison(path: &Path, cpo_path: Option<&Path>, ids: &[String], models: &[(String, CpoReport)]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "model,lpml_mean,lpml_sum")?;
        for (name, r) in models {
            writeln!(w, "{name},{:.6},{:.6}", r.lpml_mean, r.lpml_sum)?;
        }
        Ok(())
    })?;
    let Some(cpo_path) = cpo_path else {
        return Ok(());
    };
    write_atomic(cpo_path, |w| {
        write!(w, "id")?;
        for (name, _) in models {
            write!(w, ",log_cpo_{name}")?;
        }
        writeln!(w)?;
        for (i, id) in ids.iter().enumerate() {
            write!(w, "{id}")?;
            for (_, r) in models {
                write!(w, ",{:.6}", r.log_cpo[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Confusion matrix (actual × predicted, class 1 first) followed by the
/// error rate, sensitivity, specificity and AUC, as `measure,value` rows.
pub fn write_classification(path: &Path, report: &ClassificationReport, cutoff: f64) -> Result<()> {
    let c = report.confusion;
    write_atomic(path, |w| {
        writeln!(w, "measure,value")?;
        writeln!(w, "cutoff,{cutoff}")?;
        writeln!(w, "actual_1_predicted_1,{}", c[0][0])?;
        writeln!(w, "actual_1_predicted_0,{}", c[0][1])?;
        writeln!(w, "actual_0_predicted_1,{}", c[1][0])?;
        writeln!(w, "actual_0_predicted_0,{}", c[1][1])?;
        writeln!(w, "error_rate,{:.6}", report.error_rate)?;
        writeln!(w, "sensitivity,{}", opt(report.sensitivity().ok()))?;
        writeln!(w, "specificity,{}", opt(report.specificity().ok()))?;
        writeln!(w, "auc,{}", opt(report.auc))?;
        writeln!(w, "auc_sd,{}", opt(report.auc_sd))?;
        Ok(())
    })
}

/// ROC points ready for plotting.
pub fn write_roc(path: &Path, roc: &Roc) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "FPR,TPR")?;
        for (fpr, tpr) in &roc.points {
            writeln!(w, "{fpr:.6},{tpr:.6}")?;
        }
        Ok(())
    })
}

/// Replication summary (truth, mean and median of the posterior means with
/// their spreads, interval coverage) and, when `fits_path` is given, the
/// per-replicate fit statistics.
pub fn write_replication_report(path: &Path, fits_path: Option<&Path>, reports: &[ReplicationReport]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "model,parameter,true_value,mean,sd_mean,median,sd_median,coverage")?;
        for r in reports {
            for p in &r.parameters {
                writeln!(
                    w,
                    "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4}",
                    r.variant, p.name, p.truth, p.mean, p.sd_mean, p.median, p.sd_median, p.coverage
                )?;
            }
        }
        Ok(())
    })?;
    let Some(fits_path) = fits_path else {
        return Ok(());
    };
    write_atomic(fits_path, |w| {
        writeln!(w, "model,replicate,lpml_mean,lpml_sum,auc,error_rate,status")?;
        for r in reports {
            for f in &r.fits {
                writeln!(
                    w,
                    "{},{},{:.6},{:.6},{:.6},{:.6},ok",
                    r.variant, f.replicate, f.lpml_mean, f.lpml_sum, f.auc, f.error_rate
                )?;
            }
            for (rep, msg) in &r.failures {
                let msg = msg.replace([',', '\n'], ";");
                writeln!(w, "{},{rep},NA,NA,NA,NA,failed: {msg}", r.variant)?;
            }
        }
        Ok(())
    })
}
