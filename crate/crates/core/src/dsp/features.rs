//! Minimal statistical features and the named feature-matrix artifact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DspError;
use crate::data::{mean, window_spans, Channel, Recording};
use crate::{VERSION, WINDOW_LEN};

/// Population standard deviation (divides by `n`).
pub fn std_population(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

/// Fisher excess kurtosis `m4/m2² - 3` from population moments.
///
/// `None` when the window is constant (second moment zero).
pub fn kurtosis_excess(xs: &[f64]) -> Option<f64> {
    let m = mean(xs);
    let n = xs.len() as f64;
    let (mut m2, mut m4) = (0.0f64, 0.0f64);
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return None;
    }
    Some(m4 / (m2 * m2) - 3.0)
}

/// Which sensors feed the minimal feature set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatVariant {
    /// `[mean_rpm, std(vib1), kurtosis(vib1)]`
    ThreeFeature,
    /// `[mean_rpm, std & kurtosis of each of vib1..vib3]`
    SevenFeature,
}

impl StatVariant {
    pub fn channels(self) -> &'static [Channel] {
        match self {
            StatVariant::ThreeFeature => &[Channel::Vib1],
            StatVariant::SevenFeature => &Channel::ALL,
        }
    }

    pub fn feature_names(self) -> Vec<String> {
        let mut names = vec!["mean_rpm".to_string()];
        for c in self.channels() {
            let base = c.column_name().to_lowercase();
            names.push(format!("{base}_std"));
            names.push(format!("{base}_kurtosis_excess"));
        }
        names
    }
}

/// Per-row provenance carried alongside the feature values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub strength: u8,
    pub label: bool,
    pub mean_rpm: f64,
    pub window_index: usize,
}

/// Rows of named features plus the recipe that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    /// Extraction recipe identifier, e.g. `stat-features/three v1`.
    pub recipe: String,
    pub rows: Vec<Vec<f64>>,
    pub meta: Vec<RowMeta>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, recipe: impl Into<String>) -> Self {
        Self {
            names,
            recipe: recipe.into(),
            rows: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>, meta: RowMeta) {
        debug_assert_eq!(row.len(), self.names.len());
        self.rows.push(row);
        self.meta.push(meta);
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    /// Append all rows of `other`, which must share the same columns.
    pub fn extend(&mut self, other: FeatureMatrix) {
        debug_assert_eq!(self.names, other.names);
        self.rows.extend(other.rows);
        self.meta.extend(other.meta);
    }

    pub fn labels(&self) -> Vec<bool> {
        self.meta.iter().map(|m| m.label).collect()
    }

    /// Write as CSV with a recipe/version comment header and trailing
    /// metadata columns. `mean_rpm` is emitted once even when it is
    /// already a feature column.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# recipe: {}", self.recipe)?;
        writeln!(w, "# version: {VERSION}")?;
        let has_rpm = self.names.iter().any(|n| n == "mean_rpm");
        write!(w, "{}", self.names.join(","))?;
        if !has_rpm {
            write!(w, ",mean_rpm")?;
        }
        writeln!(w, ",strength,label")?;
        for (row, meta) in self.rows.iter().zip(&self.meta) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    write!(w, ",")?;
                }
                write!(w, "{v}")?;
            }
            if !has_rpm {
                write!(w, ",{}", meta.mean_rpm)?;
            }
            writeln!(w, ",{},{}", meta.strength, u8::from(meta.label))?;
        }
        w.flush()
    }
}

/// Minimal per-window features of a trimmed recording: mean speed plus the
/// standard deviation and excess kurtosis of each requested vibration
/// channel, over the standard one-second window grid.
pub fn stat_features(trimmed: &Recording, variant: StatVariant) -> Result<FeatureMatrix, DspError> {
    let mut out = FeatureMatrix::new(
        variant.feature_names(),
        match variant {
            StatVariant::ThreeFeature => "stat-features/three v1",
            StatVariant::SevenFeature => "stat-features/seven v1",
        },
    );
    for (i, start) in window_spans(trimmed.len(), WINDOW_LEN, WINDOW_LEN).enumerate() {
        let span = start..start + WINDOW_LEN;
        let mean_rpm = mean(&trimmed.measured_rpm[span.clone()]);
        let mut row = Vec::with_capacity(out.names.len());
        row.push(mean_rpm);
        for &c in variant.channels() {
            let xs = &trimmed.channel(c)[span.clone()];
            row.push(std_population(xs));
            row.push(kurtosis_excess(xs).ok_or(DspError::ZeroVariance(i))?);
        }
        out.push(
            row,
            RowMeta {
                strength: trimmed.unbalance_id,
                label: trimmed.unbalance_id != 0,
                mean_rpm,
                window_index: i,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetId, RecordingSource};
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    #[test]
    fn sine_window_has_minus_three_halves_excess_kurtosis() {
        let xs: Vec<f64> = (0..4096).map(|n| (TAU * 64.0 * n as f64 / 4096.0).sin()).collect();
        let k = kurtosis_excess(&xs).unwrap();
        assert_relative_eq!(k, -1.5, epsilon = 1e-3);
    }

    #[test]
    fn gaussian_sample_has_near_zero_excess_kurtosis() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::stream_rng(21, "kurtosis");
        let xs: Vec<f64> = (0..4096).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let k = kurtosis_excess(&xs).unwrap();
        assert!(k.abs() < 0.2, "excess kurtosis {k}");
    }

    #[test]
    fn kurtosis_shift_and_scale_invariance() {
        let xs: Vec<f64> = (0..256).map(|n| ((n * 37) % 101) as f64 * 0.09 - 3.0).collect();
        let k0 = kurtosis_excess(&xs).unwrap();
        let s0 = std_population(&xs);
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x + 7.0).collect();
        assert_relative_eq!(kurtosis_excess(&ys).unwrap(), k0, epsilon = 1e-9);
        assert_relative_eq!(std_population(&ys), 2.5 * s0, epsilon = 1e-9 * s0);
    }

    #[test]
    fn constant_window_is_zero_variance() {
        assert!(kurtosis_excess(&[5.0; 64]).is_none());
    }

    fn flat_recording(len: usize, strength: u8) -> Recording {
        let id = DatasetId::new(strength, crate::data::Role::Development).unwrap();
        let tri: Vec<f64> = (0..len).map(|i| (i % 7) as f64).collect();
        Recording::new(
            vec![3.0; len],
            vec![1000.0; len],
            tri.clone(),
            tri.iter().map(|x| x * 2.0).collect(),
            tri.iter().map(|x| x + 1.0).collect(),
            id,
            RecordingSource::Synthetic { seed: 0 },
        )
        .unwrap()
    }

    #[test]
    fn three_and_seven_feature_shapes() {
        let rec = flat_recording(3 * 4096, 2);
        let three = stat_features(&rec, StatVariant::ThreeFeature).unwrap();
        assert_eq!(three.n_cols(), 3);
        assert_eq!(three.n_rows(), 3);
        assert_eq!(three.names[0], "mean_rpm");
        assert!(three.meta.iter().all(|m| m.label && m.strength == 2));

        let seven = stat_features(&rec, StatVariant::SevenFeature).unwrap();
        assert_eq!(seven.n_cols(), 7);
        // vib2 = 2*vib1: std doubles, kurtosis unchanged.
        assert_relative_eq!(seven.rows[0][3], 2.0 * seven.rows[0][1], epsilon = 1e-12);
        assert_relative_eq!(seven.rows[0][4], seven.rows[0][2], epsilon = 1e-9);
    }

    #[test]
    fn feature_csv_has_recipe_header_and_meta_columns() {
        let rec = flat_recording(4096, 0);
        let m = stat_features(&rec, StatVariant::ThreeFeature).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# recipe: stat-features/three"));
        assert!(lines.next().unwrap().starts_with("# version:"));
        assert_eq!(
            lines.next().unwrap(),
            "mean_rpm,vibration_1_std,vibration_1_kurtosis_excess,strength,label"
        );
        assert_eq!(lines.count(), 1);
    }
}
