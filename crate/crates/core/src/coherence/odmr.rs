use serde::{Deserialize, Serialize};

use crate::defect::NsDefect;
use crate::error::{Error, Result};

/// Enumeration bound for the 2^N charge configurations.
pub const MAX_ODMR_DEFECTS: usize = 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineShape {
    #[default]
    Lorentzian,
    Gaussian,
}

impl LineShape {
    /// Peak-normalized profile at `offset` from line center.
    pub fn profile(self, offset: f64, fwhm: f64) -> f64 {
        let x = offset / fwhm;
        match self {
            LineShape::Lorentzian => 1.0 / (1.0 + 4.0 * x * x),
            LineShape::Gaussian => (-4.0 * std::f64::consts::LN_2 * x * x).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeConfiguration {
    /// `true` where the defect is neutral.
    pub neutral: Vec<bool>,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrLine {
    /// Offset from the bare probe resonance, Hz.
    pub freq: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrSpectrum {
    pub freq: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// FWHM, Hz.
    pub linewidth: f64,
    pub line_shape: LineShape,
    pub configurations: Vec<ChargeConfiguration>,
    pub lines: Vec<OdmrLine>,
}

impl OdmrSpectrum {
    pub fn total_weight(&self) -> f64 {
        self.configurations.iter().map(|c| c.weight).sum()
    }
}

/// ODMR dip spectrum summed over all charge configurations of `defects`.
///
/// Each neutral defect splits every line of its configuration into ±aᵢ/2;
/// each ionized defect shifts them by dᵢ. `contrast` scales the dip depth.
pub fn odmr_spectrum(
    defects: &[NsDefect],
    line_shape: LineShape,
    linewidth: f64,
    contrast: f64,
    freq_grid: &[f64],
) -> Result<OdmrSpectrum> {
    if defects.len() > MAX_ODMR_DEFECTS {
        return Err(Error::Capacity(format!(
            "{} defects exceed the ODMR enumeration bound of {MAX_ODMR_DEFECTS}",
            defects.len()
        )));
    }
    if !(linewidth > 0.0) {
        return Err(Error::domain("linewidth must be positive"));
    }
    for d in defects {
        d.validate()?;
    }
    let n = defects.len();
    let mut configurations = Vec::with_capacity(1 << n);
    let mut lines = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let neutral: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let mut weight = 1.0;
        let mut shift = 0.0;
        let mut split = Vec::new();
        for (d, &is_neutral) in defects.iter().zip(&neutral) {
            if is_neutral {
                weight *= d.rho;
                split.push(0.5 * d.a_dipolar);
            } else {
                weight *= 1.0 - d.rho;
                shift += d.d_stark;
            }
        }
        let per_line = weight / (1u64 << split.len()) as f64;
        for signs in 0u32..(1u32 << split.len()) {
            let offset: f64 = split
                .iter()
                .enumerate()
                .map(|(k, h)| if signs & (1 << k) != 0 { *h } else { -*h })
                .sum();
            lines.push(OdmrLine {
                freq: shift + offset,
                weight: per_line,
            });
        }
        configurations.push(ChargeConfiguration { neutral, weight });
    }
    let amplitude = freq_grid
        .iter()
        .map(|&f| {
            contrast
                * lines
                    .iter()
                    .map(|l| l.weight * line_shape.profile(f - l.freq, linewidth))
                    .sum::<f64>()
        })
        .collect();
    Ok(OdmrSpectrum {
        freq: freq_grid.to_vec(),
        amplitude,
        linewidth,
        line_shape,
        configurations,
        lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_neutral_defect_splits() {
        let d = NsDefect::new(1.0, 100e3, -40e3).unwrap();
        let s = odmr_spectrum(&[d], LineShape::Lorentzian, 10e3, 1.0, &[]).unwrap();
        let live: Vec<_> = s.lines.iter().filter(|l| l.weight > 0.0).collect();
        assert_eq!(live.len(), 2);
        let mut f: Vec<f64> = live.iter().map(|l| l.freq).collect();
        f.sort_by(f64::total_cmp);
        assert_eq!(f, vec![-50e3, 50e3]);
        assert!(live.iter().all(|l| l.weight == 0.5));
    }

    #[test]
    fn single_ionized_defect_shifts() {
        let d = NsDefect::new(0.0, 100e3, -40e3).unwrap();
        let s = odmr_spectrum(&[d], LineShape::Gaussian, 10e3, 1.0, &[-40e3]).unwrap();
        let live: Vec<_> = s.lines.iter().filter(|l| l.weight > 0.0).collect();
        assert_eq!(live.len(), 1);
        assert_eq!(live[0].freq, -40e3);
        assert_eq!(live[0].weight, 1.0);
        assert!((s.amplitude[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_configuration_weights() {
        let defects = [
            NsDefect::new(0.474, 158.6e3, -41e3).unwrap(),
            NsDefect::new(0.302, 125e3, -33e3).unwrap(),
        ];
        let s = odmr_spectrum(&defects, LineShape::Lorentzian, 20e3, 1.0, &[]).unwrap();
        let w = |a: bool, b: bool| {
            s.configurations
                .iter()
                .find(|c| c.neutral == vec![a, b])
                .unwrap()
                .weight
        };
        assert!((w(true, true) - 0.1431).abs() < 1e-4);
        assert!((w(false, false) - 0.3671).abs() < 1e-4);
        assert!((w(true, false) + w(false, true) - 0.4897).abs() < 1e-4);
        // 1 + 2 + 2 + 4 lines.
        assert_eq!(s.lines.len(), 9);
    }

    #[test]
    fn too_many_defects_is_a_capacity_error() {
        let d = NsDefect::new(0.5, 1e4, 0.0).unwrap();
        let many = vec![d; MAX_ODMR_DEFECTS + 1];
        assert!(matches!(
            odmr_spectrum(&many, LineShape::Lorentzian, 1e3, 1.0, &[]),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn profiles_are_half_maximum_at_half_width() {
        for shape in [LineShape::Lorentzian, LineShape::Gaussian] {
            assert!((shape.profile(5e3, 10e3) - 0.5).abs() < 1e-12);
            assert_eq!(shape.profile(0.0, 10e3), 1.0);
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(spec in proptest::collection::vec((0.0..=1.0f64, -2e5..2e5f64, -5e4..5e4f64), 0..7)) {
            let defects: Vec<_> = spec.iter().map(|&(r, a, d)| NsDefect::new(r, a, d).unwrap()).collect();
            let s = odmr_spectrum(&defects, LineShape::Lorentzian, 5e3, 1.0, &[]).unwrap();
            prop_assert!((s.total_weight() - 1.0).abs() < 1e-9);
            let line_total: f64 = s.lines.iter().map(|l| l.weight).sum();
            prop_assert!((line_total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn fully_neutral_has_no_stark_contribution(spec in proptest::collection::vec((-2e5..2e5f64, -5e4..5e4f64), 1..6)) {
            let defects: Vec<_> = spec.iter().map(|&(a, d)| NsDefect::new(1.0, a, d).unwrap()).collect();
            let s = odmr_spectrum(&defects, LineShape::Lorentzian, 5e3, 1.0, &[]).unwrap();
            let mean: f64 = s.lines.iter().map(|l| l.weight * l.freq).sum();
            prop_assert!(mean.abs() < 1e-6);
        }
    }
}
