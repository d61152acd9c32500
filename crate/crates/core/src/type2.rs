//! Rank-1 Type II subband codebook.
//!
//! The report picks one rotation of the oversampled grid and `K` mutually
//! orthogonal beams from it, shared by both polarizations and all subbands.
//! Each of the `2K` combining coefficients carries a wideband amplitude (8
//! levels, normalized to the strongest coefficient), an optional 1-bit
//! subband amplitude, and a per-subband QPSK or 8PSK phase. Coefficients with
//! wideband amplitude zero cost no subband bits, which makes the overhead
//! variable.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::beams::{ArrayConfig, BeamGrid};
use crate::error::{ensure, Error, Result};
use crate::linalg::{inner, norm, CMatrix, C64};
use crate::type1::ceil_log2;

/// Wideband amplitude levels; code 7 is the strongest-coefficient reference.
pub const WB_AMP_LEVELS: [f64; 8] = [
    0.0,
    0.125,                     // sqrt(1/64)
    0.176_776_695_296_636_9,   // sqrt(1/32)
    0.25,                      // sqrt(1/16)
    0.353_553_390_593_273_8,   // sqrt(1/8)
    0.5,                       // sqrt(1/4)
    std::f64::consts::FRAC_1_SQRT_2,
    1.0,
];

/// Subband amplitude levels.
pub const SB_AMP_LEVELS: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, 1.0];

const WB_BITS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMode {
    Qpsk,
    #[serde(rename = "8psk")]
    Psk8,
}

impl PhaseMode {
    pub fn bits(self) -> u32 {
        match self {
            PhaseMode::Qpsk => 2,
            PhaseMode::Psk8 => 3,
        }
    }

    pub fn points(self) -> usize {
        1 << self.bits()
    }
}

fn default_k() -> usize {
    4
}

fn default_phase() -> PhaseMode {
    PhaseMode::Qpsk
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Type2Config {
    #[serde(default = "default_k")]
    pub k_beams: usize,
    #[serde(default = "default_phase")]
    pub phase_mode: PhaseMode,
    #[serde(default)]
    pub subband_amplitude: bool,
}

impl Default for Type2Config {
    fn default() -> Self {
        Self {
            k_beams: default_k(),
            phase_mode: default_phase(),
            subband_amplitude: false,
        }
    }
}

impl Type2Config {
    pub fn validate(&self, array: &ArrayConfig) -> Result<()> {
        ensure!(
            self.k_beams >= 1 && self.k_beams <= array.ports_per_pol(),
            Config,
            "k_beams = {} must lie in [1, n1*n2 = {}]",
            self.k_beams,
            array.ports_per_pol()
        );
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Type2Report {
    /// Grid rotation `(q1, q2)`.
    pub rotation: (usize, usize),
    /// Positions `a * n2 + b` within the rotated orthogonal basis, ascending.
    pub beam_set: Vec<usize>,
    /// Coefficient position `r * K + i` of the strongest coefficient.
    pub strongest: usize,
    pub wb_amp_codes: Vec<u8>,
    /// `n_subbands x 2K`, present only when subband amplitudes are enabled.
    pub sb_amp_codes: Option<Vec<Vec<u8>>>,
    /// `n_subbands x 2K`.
    pub phase_codes: Vec<Vec<u8>>,
    pub bit_cost: u32,
}

impl Type2Report {
    pub fn k(&self) -> usize {
        self.beam_set.len()
    }

    pub fn n_subbands(&self) -> usize {
        self.phase_codes.len()
    }

    /// Number of coefficients with a nonzero wideband amplitude.
    pub fn nonzero_coefficients(&self) -> usize {
        self.wb_amp_codes.iter().filter(|&&c| c != 0).count()
    }
}

/// Grid index of basis position `pos` under rotation `(q1, q2)`.
pub fn rotated_beam_index(cfg: &ArrayConfig, rotation: (usize, usize), pos: usize) -> usize {
    let (a, b) = (pos / cfg.n2, pos % cfg.n2);
    cfg.beam_index(rotation.0 + cfg.o1 * a, rotation.1 + cfg.o2 * b)
}

/// Binomial coefficient, exact for the sizes used here.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Index of the level nearest to `x`, preferring the larger level on ties.
fn nearest_level(levels: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, &l) in levels.iter().enumerate() {
        if (x - l).abs() <= (x - levels[best]).abs() {
            best = i;
        }
    }
    best
}

/// Nearest PSK point to `angle`; a tie goes to the lower code.
pub fn quantize_phase(angle: f64, points: usize) -> usize {
    let step = 2.0 * PI / points as f64;
    let t = (angle / step).rem_euclid(points as f64);
    let lo = t.floor() as usize % points;
    let hi = (lo + 1) % points;
    let frac = t - t.floor();
    if frac > 0.5 {
        hi
    } else if frac < 0.5 {
        lo
    } else {
        lo.min(hi)
    }
}

pub fn dequantize_phase(code: usize, points: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * code as f64 / points as f64)
}

/// Beam selection result.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamSelection {
    pub rotation: (usize, usize),
    pub beam_set: Vec<usize>,
    /// `Σ_{beams} Σ_s Σ_r |b^H v_{s,r}|²` for the chosen beams.
    pub captured_power: f64,
}

/// Type II encoder/decoder bound to one array and codebook configuration.
#[derive(Clone, Debug)]
pub struct Type2Codebook {
    grid: BeamGrid,
    config: Type2Config,
}

impl Type2Codebook {
    pub fn new(array: ArrayConfig, config: Type2Config) -> Result<Self> {
        config.validate(&array)?;
        Ok(Self {
            grid: BeamGrid::new(array)?,
            config,
        })
    }

    pub fn array(&self) -> &ArrayConfig {
        self.grid.config()
    }

    pub fn config(&self) -> &Type2Config {
        &self.config
    }

    fn check_input(&self, v_stack: &CMatrix) -> Result<()> {
        let nt = self.array().nt();
        ensure!(
            v_stack.rows() == nt,
            Contract,
            "eigen matrix has {} rows, expected nt = {nt}",
            v_stack.rows()
        );
        ensure!(v_stack.cols() >= 1, Contract, "eigen matrix has no columns");
        ensure!(v_stack.is_finite(), Domain, "eigen matrix has non-finite entries");
        Ok(())
    }

    /// Per-beam power captured over subbands and polarizations for every
    /// basis beam of rotation `(q1, q2)`.
    pub fn basis_scores(&self, v_stack: &CMatrix, rotation: (usize, usize)) -> Vec<f64> {
        let half = self.array().ports_per_pol();
        let columns = v_stack.columns();
        self.grid
            .orthogonal_set(rotation.0, rotation.1)
            .into_iter()
            .map(|g| {
                let b = self.grid.by_index(g);
                columns
                    .iter()
                    .map(|col| {
                        let (top, bottom) = col.split_at(half);
                        inner(b, top).norm_sqr() + inner(b, bottom).norm_sqr()
                    })
                    .sum()
            })
            .collect()
    }

    /// Pick the rotation and the `K` basis beams capturing the most power.
    ///
    /// Rotations whose captured power agrees to within rounding are ties.
    /// They can be exact: with `n2 = 2` every vertical rotation spans the
    /// whole vertical space, so `K >= 2` beams of any of them capture a
    /// single-beam input completely. Ties go to the rotation whose strongest
    /// beam carries the most power, then to the lowest index.
    pub fn select_beams(&self, v_stack: &CMatrix) -> Result<BeamSelection> {
        self.check_input(v_stack)?;
        let cfg = *self.array();
        let k = self.config.k_beams;
        let rel = 1e-9;
        let mut best: Option<(BeamSelection, f64)> = None;
        for q1 in 0..cfg.o1 {
            for q2 in 0..cfg.o2 {
                let scores = self.basis_scores(v_stack, (q1, q2));
                let mut order: Vec<usize> = (0..scores.len()).collect();
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                let mut chosen = order[..k].to_vec();
                let captured = chosen.iter().map(|&i| scores[i]).sum::<f64>();
                let top = scores[order[0]];
                chosen.sort_unstable();
                let better = best.as_ref().map_or(true, |(b, b_top)| {
                    let tol = rel * b.captured_power.abs();
                    if (captured - b.captured_power).abs() <= tol {
                        top > b_top + rel * b_top.abs()
                    } else {
                        captured > b.captured_power
                    }
                });
                if better {
                    let sel = BeamSelection {
                        rotation: (q1, q2),
                        beam_set: chosen,
                        captured_power: captured,
                    };
                    best = Some((sel, top));
                }
            }
        }
        Ok(best.expect("at least one rotation").0)
    }

    /// Unquantized least-squares combining coefficients, `n_subbands x 2K`,
    /// position `r * K + i`.
    pub fn coefficients(&self, v_stack: &CMatrix, sel: &BeamSelection) -> Vec<Vec<C64>> {
        let cfg = self.array();
        let half = cfg.ports_per_pol();
        let beams: Vec<&[C64]> = sel
            .beam_set
            .iter()
            .map(|&p| self.grid.by_index(rotated_beam_index(cfg, sel.rotation, p)))
            .collect();
        v_stack
            .columns()
            .iter()
            .map(|col| {
                let (top, bottom) = col.split_at(half);
                [top, bottom]
                    .iter()
                    .flat_map(|pol| beams.iter().map(move |b| inner(b, pol) / half as f64))
                    .collect()
            })
            .collect()
    }

    pub fn encode(&self, v_stack: &CMatrix) -> Result<Type2Report> {
        let sel = self.select_beams(v_stack)?;
        let coef = self.coefficients(v_stack, &sel);
        let n_coef = 2 * self.config.k_beams;
        let ns = coef.len();

        let mean_mag: Vec<f64> = (0..n_coef)
            .map(|j| coef.iter().map(|row| row[j].norm()).sum::<f64>() / ns as f64)
            .collect();
        let mut strongest = 0;
        for j in 0..n_coef {
            if mean_mag[j] > mean_mag[strongest] {
                strongest = j;
            }
        }
        let reference = mean_mag[strongest];
        if reference <= 0.0 {
            return Err(Error::Degenerate(
                "eigen matrix has no energy on the selected beams".into(),
            ));
        }
        let mut wb_amp_codes: Vec<u8> = mean_mag
            .iter()
            .map(|m| nearest_level(&WB_AMP_LEVELS, m / reference) as u8)
            .collect();
        wb_amp_codes[strongest] = 7;

        let points = self.config.phase_mode.points();
        let mut phase_codes = Vec::with_capacity(ns);
        let mut sb_codes = Vec::with_capacity(ns);
        for row in &coef {
            let anchor = row[strongest];
            let derotate = if anchor.norm() > 0.0 {
                anchor.conj() / anchor.norm()
            } else {
                C64::new(1.0, 0.0)
            };
            let mut phases = vec![0u8; n_coef];
            let mut amps = vec![0u8; n_coef];
            for j in 0..n_coef {
                let code = wb_amp_codes[j] as usize;
                if code == 0 {
                    continue;
                }
                let c = row[j] * derotate;
                phases[j] = quantize_phase(c.arg(), points) as u8;
                let ratio = c.norm() / reference / WB_AMP_LEVELS[code];
                amps[j] = nearest_level(&SB_AMP_LEVELS, ratio) as u8;
            }
            phase_codes.push(phases);
            sb_codes.push(amps);
        }

        let mut report = Type2Report {
            rotation: sel.rotation,
            beam_set: sel.beam_set,
            strongest,
            wb_amp_codes,
            sb_amp_codes: self.config.subband_amplitude.then_some(sb_codes),
            phase_codes,
            bit_cost: 0,
        };
        report.bit_cost = self.overhead(&report);
        Ok(report)
    }

    fn check_report(&self, report: &Type2Report) -> Result<()> {
        let cfg = self.array();
        let k = self.config.k_beams;
        let n_coef = 2 * k;
        ensure!(
            report.rotation.0 < cfg.o1 && report.rotation.1 < cfg.o2,
            Contract,
            "rotation {:?} out of range",
            report.rotation
        );
        ensure!(report.beam_set.len() == k, Contract, "beam set must hold {k} beams");
        let mut seen = report.beam_set.clone();
        seen.sort_unstable();
        seen.dedup();
        ensure!(
            seen.len() == k && seen.iter().all(|&p| p < cfg.ports_per_pol()),
            Contract,
            "beam set {:?} is not {k} distinct basis positions",
            report.beam_set
        );
        ensure!(report.strongest < n_coef, Contract, "strongest index out of range");
        ensure!(
            report.wb_amp_codes.len() == n_coef && report.wb_amp_codes.iter().all(|&c| c < 8),
            Contract,
            "wideband amplitude codes malformed"
        );
        ensure!(
            report.wb_amp_codes[report.strongest] == 7,
            Contract,
            "strongest coefficient must carry amplitude code 7"
        );
        let ns = report.phase_codes.len();
        ensure!(ns >= 1, Contract, "report has no subbands");
        let points = self.config.phase_mode.points();
        ensure!(
            report
                .phase_codes
                .iter()
                .all(|row| row.len() == n_coef && row.iter().all(|&c| (c as usize) < points)),
            Contract,
            "phase codes malformed"
        );
        match (&report.sb_amp_codes, self.config.subband_amplitude) {
            (Some(sb), true) => ensure!(
                sb.len() == ns && sb.iter().all(|row| row.len() == n_coef && row.iter().all(|&c| c < 2)),
                Contract,
                "subband amplitude codes malformed"
            ),
            (None, false) => {}
            _ => {
                return Err(Error::Contract(
                    "subband amplitude codes do not match the configuration".into(),
                ))
            }
        }
        Ok(())
    }

    /// Dequantized coefficients, `n_subbands x 2K`, relative to the strongest.
    pub fn dequantized_coefficients(&self, report: &Type2Report) -> Result<Vec<Vec<C64>>> {
        self.check_report(report)?;
        let points = self.config.phase_mode.points();
        Ok(report
            .phase_codes
            .iter()
            .enumerate()
            .map(|(s, phases)| {
                phases
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let wb = WB_AMP_LEVELS[report.wb_amp_codes[j] as usize];
                        let sb = report
                            .sb_amp_codes
                            .as_ref()
                            .map_or(1.0, |sb| SB_AMP_LEVELS[sb[s][j] as usize]);
                        dequantize_phase(p as usize, points) * (wb * sb)
                    })
                    .collect()
            })
            .collect())
    }

    /// Reconstructed eigen matrix with unit-norm columns.
    pub fn decode(&self, report: &Type2Report) -> Result<CMatrix> {
        let coef = self.dequantized_coefficients(report)?;
        let cfg = self.array();
        let half = cfg.ports_per_pol();
        let k = self.config.k_beams;
        let beams: Vec<&[C64]> = report
            .beam_set
            .iter()
            .map(|&p| self.grid.by_index(rotated_beam_index(cfg, report.rotation, p)))
            .collect();
        let mut out = CMatrix::zeros(cfg.nt(), coef.len());
        for (s, row) in coef.iter().enumerate() {
            let mut w = vec![C64::new(0.0, 0.0); 2 * half];
            for r in 0..2 {
                for (i, b) in beams.iter().enumerate() {
                    let c = row[r * k + i];
                    if c.norm() == 0.0 {
                        continue;
                    }
                    for (n, x) in b.iter().enumerate() {
                        w[r * half + n] += x * c;
                    }
                }
            }
            let n = norm(&w);
            ensure!(n > 0.0, Contract, "report reconstructs a zero column");
            for x in &mut w {
                *x /= n;
            }
            out.set_column(s, &w);
        }
        Ok(out)
    }

    /// Feedback bits of a report.
    pub fn overhead(&self, report: &Type2Report) -> u32 {
        overhead_type2(report, self.array(), &self.config)
    }
}

/// `ceil(log2(o1 o2)) + ceil(log2 C(n1 n2, K)) + ceil(log2 2K) + 3 (2K - 1)`
/// plus, per subband, phase and subband-amplitude bits for every coefficient
/// with a nonzero wideband amplitude.
pub fn overhead_type2(report: &Type2Report, array: &ArrayConfig, config: &Type2Config) -> u32 {
    let k = report.k() as u64;
    let wideband = ceil_log2((array.o1 * array.o2) as u128)
        + ceil_log2(binomial(array.ports_per_pol() as u64, k))
        + ceil_log2(2 * k as u128)
        + WB_BITS * (2 * k as u32 - 1);
    let per_coef = config.phase_mode.bits() + u32::from(config.subband_amplitude);
    wideband + report.n_subbands() as u32 * per_coef * report.nonzero_coefficients() as u32
}

/// Arithmetic mean of per-report bit costs.
pub fn mean_overhead(reports: &[Type2Report]) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    reports.iter().map(|r| r.bit_cost as f64).sum::<f64>() / reports.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::stacked_cosine_similarity;
    use crate::rng::Stream;

    fn array(n1: usize, n2: usize) -> ArrayConfig {
        ArrayConfig::new(n1, n2, 4, 4, 2).unwrap()
    }

    fn random_stack(nt: usize, ns: usize, s: &mut Stream) -> CMatrix {
        let mut m = CMatrix::from_fn(nt, ns, |_, _| C64::new(s.normal(), s.normal()));
        for c in 0..ns {
            let col = m.column(c);
            let n = norm(&col);
            m.set_column(c, &col.iter().map(|x| x / n).collect::<Vec<_>>());
        }
        m
    }

    fn single_beam_stack(cfg: &ArrayConfig, grid_index: usize, ns: usize) -> CMatrix {
        let grid = BeamGrid::new(*cfg).unwrap();
        let b = grid.by_index(grid_index);
        let s = 1.0 / (cfg.nt() as f64).sqrt();
        let col: Vec<C64> = b.iter().chain(b.iter()).map(|x| x * s).collect();
        CMatrix::from_columns(&vec![col; ns]).unwrap()
    }

    #[test]
    fn phase_quantizer_ties_and_wrap() {
        assert_eq!(quantize_phase(0.0, 4), 0);
        assert_eq!(quantize_phase(PI / 2.0, 4), 1);
        assert_eq!(quantize_phase(-PI / 2.0, 4), 3);
        assert_eq!(quantize_phase(PI / 4.0, 4), 0);
        assert_eq!(quantize_phase(3.0 * PI / 4.0, 4), 1);
        assert_eq!(quantize_phase(-0.1, 8), 0);
        assert_eq!(quantize_phase(2.0 * PI - 0.5, 8), 7);
    }

    #[test]
    fn nearest_level_prefers_larger_on_ties() {
        assert_eq!(nearest_level(&[0.0, 1.0], 0.5), 1);
        assert_eq!(nearest_level(&WB_AMP_LEVELS, 0.03), 0);
        assert_eq!(nearest_level(&WB_AMP_LEVELS, 0.9), 7);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 4), 1820);
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(4, 4), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn single_beam_input_is_exact() {
        let cfg = array(8, 2);
        let book = Type2Codebook::new(cfg, Type2Config::default()).unwrap();
        let grid_index = rotated_beam_index(&cfg, (1, 2), 5);
        let v = single_beam_stack(&cfg, grid_index, 13);
        let sel = book.select_beams(&v).unwrap();
        assert_eq!(sel.rotation, (1, 2));
        assert!(sel.beam_set.contains(&5));
        let scores = book.basis_scores(&v, (1, 2));
        for (i, &sc) in scores.iter().enumerate() {
            if i != 5 {
                assert!(sc < scores[5]);
            }
        }
        let report = book.encode(&v).unwrap();
        let back = book.decode(&report).unwrap();
        assert!(stacked_cosine_similarity(&v, &back).unwrap().rho >= 1.0 - 1e-9);
        // six of the eight coefficients carry no power
        assert_eq!(report.nonzero_coefficients(), 2);
        assert_eq!(report.bit_cost, 4 + 11 + 3 + 21 + 13 * 2 * 2);
    }

    #[test]
    fn every_grid_beam_survives_rotation_ties() {
        // with n2 = 2 all four vertical rotations capture a single beam fully
        let cfg = array(8, 2);
        let book = Type2Codebook::new(cfg, Type2Config::default()).unwrap();
        for grid_index in 0..cfg.grid_size() {
            let v = single_beam_stack(&cfg, grid_index, 3);
            let back = book.decode(&book.encode(&v).unwrap()).unwrap();
            let rho = stacked_cosine_similarity(&v, &back).unwrap().rho;
            assert!(rho >= 1.0 - 1e-9, "beam {grid_index}: {rho}");
        }
    }

    #[test]
    fn full_basis_when_k_equals_ports() {
        let cfg = array(2, 2);
        let book = Type2Codebook::new(cfg, Type2Config { k_beams: 4, ..Default::default() }).unwrap();
        let mut s = Stream::new(5);
        let sel = book.select_beams(&random_stack(8, 3, &mut s)).unwrap();
        assert_eq!(sel.beam_set, vec![0, 1, 2, 3]);
        assert!(Type2Codebook::new(cfg, Type2Config { k_beams: 5, ..Default::default() }).is_err());
    }

    #[test]
    fn selection_matches_exhaustive_subsets() {
        let cfg = array(2, 2);
        let book = Type2Codebook::new(cfg, Type2Config { k_beams: 2, ..Default::default() }).unwrap();
        let mut s = Stream::new(6);
        for _ in 0..50 {
            let v = random_stack(8, 3, &mut s);
            let sel = book.select_beams(&v).unwrap();
            let mut best = 0.0f64;
            for q1 in 0..4 {
                for q2 in 0..4 {
                    let sc = book.basis_scores(&v, (q1, q2));
                    for a in 0..4 {
                        for b in a + 1..4 {
                            best = best.max(sc[a] + sc[b]);
                        }
                    }
                }
            }
            assert!((sel.captured_power - best).abs() <= 1e-12 * best);
        }
    }

    #[test]
    fn selected_beams_are_orthogonal() {
        let cfg = array(8, 2);
        let book = Type2Codebook::new(cfg, Type2Config::default()).unwrap();
        let grid = BeamGrid::new(cfg).unwrap();
        let mut s = Stream::new(7);
        let sel = book.select_beams(&random_stack(32, 4, &mut s)).unwrap();
        for &a in &sel.beam_set {
            for &b in &sel.beam_set {
                let g = inner(
                    grid.by_index(rotated_beam_index(&cfg, sel.rotation, a)),
                    grid.by_index(rotated_beam_index(&cfg, sel.rotation, b)),
                );
                let expect = if a == b { 16.0 } else { 0.0 };
                assert!((g - C64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn overhead_formula_reference() {
        let cfg = array(8, 2);
        let config = Type2Config::default();
        let mut report = Type2Report {
            rotation: (0, 0),
            beam_set: vec![0, 1, 2, 3],
            strongest: 0,
            wb_amp_codes: vec![7; 8],
            sb_amp_codes: None,
            phase_codes: vec![vec![0; 8]; 13],
            bit_cost: 0,
        };
        assert_eq!(overhead_type2(&report, &cfg, &config), 247);
        report.wb_amp_codes[3] = 0;
        assert_eq!(overhead_type2(&report, &cfg, &config), 247 - 26);
        let with_sb = Type2Config { subband_amplitude: true, ..config };
        assert_eq!(overhead_type2(&report, &cfg, &with_sb), 39 + 13 * 3 * 7);
        let reports = vec![
            Type2Report { bit_cost: 100, ..report.clone() },
            Type2Report { bit_cost: 200, ..report },
        ];
        assert_eq!(mean_overhead(&reports), 150.0);
    }

    #[test]
    fn dequantization_is_within_one_step() {
        let cfg = array(8, 2);
        for mode in [PhaseMode::Qpsk, PhaseMode::Psk8] {
            let config = Type2Config { phase_mode: mode, subband_amplitude: true, ..Default::default() };
            let book = Type2Codebook::new(cfg, config).unwrap();
            let mut s = Stream::new(8);
            for _ in 0..20 {
                let v = random_stack(32, 5, &mut s);
                let report = book.encode(&v).unwrap();
                let sel = book.select_beams(&v).unwrap();
                let coef = book.coefficients(&v, &sel);
                let deq = book.dequantized_coefficients(&report).unwrap();
                let ns = coef.len() as f64;
                let reference = coef.iter().map(|r| r[report.strongest].norm()).sum::<f64>() / ns;
                let half_step = PI / mode.points() as f64;
                for j in 0..8 {
                    let mean = coef.iter().map(|r| r[j].norm()).sum::<f64>() / ns / reference;
                    let level = WB_AMP_LEVELS[report.wb_amp_codes[j] as usize];
                    for l in WB_AMP_LEVELS {
                        assert!((mean - level).abs() <= (mean - l).abs() + 1e-12);
                    }
                    if report.wb_amp_codes[j] == 0 {
                        continue;
                    }
                    for (row, qrow) in coef.iter().zip(&deq) {
                        let anchor = row[report.strongest];
                        let rel = row[j] * anchor.conj() / anchor.norm();
                        let err = (rel.arg() - qrow[j].arg() + PI).rem_euclid(2.0 * PI) - PI;
                        assert!(err.abs() <= half_step + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_amplitudes_leave_the_strongest_beam() {
        let cfg = array(2, 2);
        let book = Type2Codebook::new(cfg, Type2Config { k_beams: 2, ..Default::default() }).unwrap();
        let report = Type2Report {
            rotation: (1, 0),
            beam_set: vec![0, 3],
            strongest: 3,
            wb_amp_codes: vec![0, 0, 0, 7],
            sb_amp_codes: None,
            phase_codes: vec![vec![0, 0, 0, 2]],
            bit_cost: 0,
        };
        let w = book.decode(&report).unwrap().column(0);
        let grid = BeamGrid::new(cfg).unwrap();
        let b = grid.by_index(rotated_beam_index(&cfg, (1, 0), 3));
        let mut expect = vec![C64::new(0.0, 0.0); 4];
        expect.extend(b.iter().map(|x| -x / 2.0));
        for (x, y) in w.iter().zip(&expect) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn malformed_reports_are_rejected() {
        let cfg = array(2, 2);
        let book = Type2Codebook::new(cfg, Type2Config { k_beams: 2, ..Default::default() }).unwrap();
        let good = Type2Report {
            rotation: (0, 0),
            beam_set: vec![0, 1],
            strongest: 0,
            wb_amp_codes: vec![7, 3, 0, 0],
            sb_amp_codes: None,
            phase_codes: vec![vec![0, 1, 0, 0]],
            bit_cost: 0,
        };
        assert!(book.decode(&good).is_ok());
        let mut bad = good.clone();
        bad.beam_set = vec![1, 1];
        assert!(book.decode(&bad).is_err());
        let mut bad = good.clone();
        bad.wb_amp_codes[0] = 6;
        assert!(book.decode(&bad).is_err());
        let mut bad = good.clone();
        bad.phase_codes[0][1] = 4;
        assert!(book.decode(&bad).is_err());
        let mut bad = good;
        bad.sb_amp_codes = Some(vec![vec![0; 4]]);
        assert!(book.decode(&bad).is_err());
    }

    #[test]
    fn decoded_columns_are_unit_norm_and_cost_recomputes() {
        let cfg = array(8, 2);
        let book = Type2Codebook::new(cfg, Type2Config { subband_amplitude: true, ..Default::default() }).unwrap();
        let mut s = Stream::new(9);
        for _ in 0..10 {
            let report = book.encode(&random_stack(32, 13, &mut s)).unwrap();
            assert_eq!(report.bit_cost, book.overhead(&report));
            for col in book.decode(&report).unwrap().columns() {
                assert!((norm(&col) - 1.0).abs() < 1e-12);
            }
        }
    }
}
