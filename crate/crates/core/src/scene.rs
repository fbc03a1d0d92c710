//! WASN scene geometry, narrowband signal statistics, and transmission costs.
//!
//! A [`Scene`] holds microphone, source, and fusion-center positions plus
//! source powers. Per-frequency statistics (steering vectors and covariance
//! matrices) are synthesized with a free-field transfer function: amplitude
//! `1/d`, phase `exp(-j*omega*d/c)`.

use crate::error::{Error, Result};
use crate::linalg::{hermitize, CMat, CVec};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SPEED_OF_SOUND: f64 = 343.0;

const MIN_SOURCE_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Scene {
    pub mic_positions: Vec<[f64; 2]>,
    pub target_position: [f64; 2],
    pub interferer_positions: Vec<[f64; 2]>,
    pub fc_position: [f64; 2],
    /// Target source PSD `P_s` (linear).
    pub target_psd: f64,
    /// Interferer PSDs (linear), one per interferer.
    pub interferer_psds: Vec<f64>,
    pub self_noise_snr_db: f64,
    pub speed_of_sound: f64,
    /// Device-dependent cost `c_i^(0)`, one per microphone.
    pub device_costs: Vec<f64>,
    /// Node spacing when the layout came from a grid shorthand.
    pub grid_spacing: Option<f64>,
}

/// Per-frequency steering vectors, covariance matrices, and source PSD.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    /// Angular frequency (rad/s).
    pub omega: f64,
    /// Target steering vector `a`.
    pub steering: CVec,
    /// One steering vector per interferer.
    pub interferer_steering: Vec<CVec>,
    pub r_nn: CMat,
    pub r_xx: CMat,
    pub r_yy: CMat,
    pub target_psd: f64,
    /// Self-noise variance `sigma^2` backing the diagonal of `r_nn`.
    pub self_noise_var: f64,
    pub interferer_psds: Vec<f64>,
}

/// Normalized per-microphone transmission costs (nonnegative, summing to one).
#[derive(Debug, Clone)]
pub struct CostVector {
    pub c: DVector<f64>,
}

impl CostVector {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.len() == 0
    }

    pub fn subset_cost(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| self.c[i]).sum()
    }

    /// Entries for an index subset, keeping the global normalization.
    pub fn restrict(&self, indices: &[usize]) -> DVector<f64> {
        DVector::from_fn(indices.len(), |r, _| self.c[indices[r]])
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Scene {
    pub fn mic_count(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mic_count();
        if m == 0 {
            return Err(Error::InvalidScene("no microphones".into()));
        }
        let all_positions = self
            .mic_positions
            .iter()
            .chain(self.interferer_positions.iter())
            .chain([&self.target_position, &self.fc_position]);
        for p in all_positions {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidScene("non-finite position".into()));
            }
        }
        if !(self.target_psd > 0.0) {
            return Err(Error::InvalidScene("target PSD must be positive".into()));
        }
        if self.interferer_psds.len() != self.interferer_positions.len() {
            return Err(Error::InvalidScene(
                "one PSD is required per interferer".into(),
            ));
        }
        if self.interferer_psds.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidScene("negative interferer PSD".into()));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidScene(
                "speed of sound must be positive".into(),
            ));
        }
        if self.device_costs.len() != m {
            return Err(Error::InvalidScene(
                "one device cost is required per microphone".into(),
            ));
        }
        let sources = std::iter::once(self.target_position).chain(self.interferer_positions.iter().copied());
        for s in sources {
            for (k, &mic) in self.mic_positions.iter().enumerate() {
                let d = dist(mic, s);
                if d <= MIN_SOURCE_DISTANCE {
                    return Err(Error::SourceAtMicrophone {
                        mic: k,
                        distance: d,
                    });
                }
            }
        }
        Ok(())
    }

    /// Free-field steering vector toward `source` at angular frequency `omega`.
    pub fn steering_vector(&self, source: [f64; 2], omega: f64) -> Result<CVec> {
        if !(omega > 0.0) {
            return Err(Error::BadParameter(format!(
                "omega must be positive, got {omega}"
            )));
        }
        let m = self.mic_count();
        let mut a = CVec::zeros(m);
        for k in 0..m {
            let d = dist(self.mic_positions[k], source);
            if d <= MIN_SOURCE_DISTANCE {
                return Err(Error::SourceAtMicrophone {
                    mic: k,
                    distance: d,
                });
            }
            let phase = -omega * d / self.speed_of_sound;
            a[k] = Complex64::from_polar(1.0 / d, phase);
        }
        Ok(a)
    }

    /// Mean received target power across microphones, `mean_k |a_k|^2 * P_s`.
    /// Frequency independent under the free-field amplitude law.
    pub fn mean_received_target_power(&self) -> f64 {
        let m = self.mic_count() as f64;
        let sum: f64 = self
            .mic_positions
            .iter()
            .map(|&p| {
                let d = dist(p, self.target_position);
                1.0 / (d * d)
            })
            .sum();
        self.target_psd * sum / m
    }

    /// Self-noise variance calibrated so the mean per-mic target SNR equals
    /// `self_noise_snr_db`.
    pub fn self_noise_variance(&self) -> f64 {
        self.mean_received_target_power() * 10f64.powf(-self.self_noise_snr_db / 10.0)
    }

    pub fn build_spectral_model(&self, omega: f64) -> Result<SpectralModel> {
        self.validate()?;
        let m = self.mic_count();
        let a = self.steering_vector(self.target_position, omega)?;
        let sigma2 = self.self_noise_variance();

        let mut r_nn = CMat::identity(m, m) * Complex64::new(sigma2, 0.0);
        let mut interferer_steering = Vec::with_capacity(self.interferer_positions.len());
        for (q, &pos) in self.interferer_positions.iter().enumerate() {
            let b = self.steering_vector(pos, omega)?;
            let p_q = self.interferer_psds[q];
            for r in 0..m {
                for c in 0..m {
                    r_nn[(r, c)] += b[r] * b[c].conj() * Complex64::new(p_q, 0.0);
                }
            }
            interferer_steering.push(b);
        }
        let r_nn = hermitize(&r_nn);

        let mut r_xx = CMat::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                r_xx[(r, c)] = a[r] * a[c].conj() * Complex64::new(self.target_psd, 0.0);
            }
        }
        let r_xx = hermitize(&r_xx);
        let r_yy = &r_xx + &r_nn;

        Ok(SpectralModel {
            omega,
            steering: a,
            interferer_steering,
            r_nn,
            r_xx,
            r_yy,
            target_psd: self.target_psd,
            self_noise_var: sigma2,
            interferer_psds: self.interferer_psds.clone(),
        })
    }

    /// Squared-distance transmission costs plus device costs, normalized to sum to one.
    pub fn transmission_costs(&self) -> Result<CostVector> {
        self.validate()?;
        let raw: Vec<f64> = self
            .mic_positions
            .iter()
            .zip(&self.device_costs)
            .map(|(&p, &c0)| {
                let d = dist(p, self.fc_position);
                d * d + c0
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateCosts);
        }
        Ok(CostVector {
            c: DVector::from_vec(raw.iter().map(|r| r / total).collect()),
        })
    }

    pub fn from_json_str(json: &str) -> Result<Scene> {
        let doc: SceneDoc = serde_json::from_str(json)?;
        doc.into_scene()
    }

    pub fn from_json_file(path: &Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path)?;
        Scene::from_json_str(&text)
    }

    /// Layout of the reference experiment: an `nx` x `ny` grid over a 12 x 12 m
    /// room, target at (2.4, 9.6), FC at (9, 3), interferers at (2.4, 2.4) and
    /// (9.6, 9.6), SIR 0 dB, self-noise SNR 50 dB.
    pub fn paper_grid(nx: usize, ny: usize) -> Scene {
        let doc = SceneDoc {
            mics: None,
            grid: Some(GridSpec {
                nx,
                ny,
                width_m: 12.0,
                height_m: 12.0,
            }),
            target: [2.4, 9.6],
            interferers: vec![[2.4, 2.4], [9.6, 9.6]],
            fc: [9.0, 3.0],
            p_s: 1.0,
            sir_db: 0.0,
            self_noise_snr_db: 50.0,
            device_cost: DeviceCost::Uniform(0.0),
            speed_of_sound: SPEED_OF_SOUND,
        };
        doc.into_scene().expect("reference layout is valid")
    }

    /// 7x7 desk-scale variant of the reference layout.
    pub fn desk_scale() -> Scene {
        Scene::paper_grid(7, 7)
    }

    /// Full 13x13 reference layout.
    pub fn full_scale() -> Scene {
        Scene::paper_grid(13, 13)
    }
}

impl SpectralModel {
    pub fn mic_count(&self) -> usize {
        self.steering.len()
    }

    /// Model restricted to an index subset (principal submatrices).
    pub fn restrict(&self, indices: &[usize]) -> SpectralModel {
        SpectralModel {
            omega: self.omega,
            steering: crate::linalg::subvector(&self.steering, indices),
            interferer_steering: self
                .interferer_steering
                .iter()
                .map(|b| crate::linalg::subvector(b, indices))
                .collect(),
            r_nn: crate::linalg::submatrix(&self.r_nn, indices),
            r_xx: crate::linalg::submatrix(&self.r_xx, indices),
            r_yy: crate::linalg::submatrix(&self.r_yy, indices),
            target_psd: self.target_psd,
            self_noise_var: self.self_noise_var,
            interferer_psds: self.interferer_psds.clone(),
        }
    }
}

/// Draws a zero-mean circularly-symmetric complex Gaussian with variance `var`.
fn cn_sample<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Synthesizes `count` narrowband snapshots `y = a s + sum_q b_q u_q + n`,
/// deterministic for a given seed.
pub fn generate_snapshots(model: &SpectralModel, count: usize, seed: u64) -> Vec<CVec> {
    let m = model.mic_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let s = cn_sample(&mut rng, model.target_psd);
        let mut y = CVec::from_fn(m, |k, _| model.steering[k] * s);
        for (q, b) in model.interferer_steering.iter().enumerate() {
            let u = cn_sample(&mut rng, model.interferer_psds[q]);
            for k in 0..m {
                y[k] += b[k] * u;
            }
        }
        for k in 0..m {
            y[k] += cn_sample(&mut rng, model.self_noise_var);
        }
        out.push(y);
    }
    out
}

/// Sample covariance `(1/L) sum_l y_l y_l^H`.
pub fn estimate_sample_covariance(snapshots: &[CVec]) -> Result<CMat> {
    let first = snapshots.first().ok_or(Error::EmptySnapshots)?;
    let m = first.len();
    let mut acc = CMat::zeros(m, m);
    for y in snapshots {
        if y.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "snapshot length {} != {m}",
                y.len()
            )));
        }
        for r in 0..m {
            for c in 0..m {
                acc[(r, c)] += y[r] * y[c].conj();
            }
        }
    }
    let scale = Complex64::new(1.0 / snapshots.len() as f64, 0.0);
    Ok(hermitize(&(acc * scale)))
}

// --- JSON loading ------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub width_m: f64,
    pub height_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceCost {
    Uniform(f64),
    PerMic(Vec<f64>),
}

impl Default for DeviceCost {
    fn default() -> Self {
        DeviceCost::Uniform(0.0)
    }
}

fn default_p_s() -> f64 {
    1.0
}

fn default_snr_db() -> f64 {
    50.0
}

fn default_sos() -> f64 {
    SPEED_OF_SOUND
}

/// JSON scene document. Either `mics` or the `grid` shorthand must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDoc {
    #[serde(default)]
    pub mics: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub target: [f64; 2],
    #[serde(default)]
    pub interferers: Vec<[f64; 2]>,
    pub fc: [f64; 2],
    #[serde(rename = "P_s", default = "default_p_s")]
    pub p_s: f64,
    /// Signal-to-interference ratio fixing each interferer PSD relative to the
    /// mean received target power.
    #[serde(default)]
    pub sir_db: f64,
    #[serde(default = "default_snr_db")]
    pub self_noise_snr_db: f64,
    #[serde(default)]
    pub device_cost: DeviceCost,
    #[serde(default = "default_sos")]
    pub speed_of_sound: f64,
}

impl SceneDoc {
    pub fn into_scene(self) -> Result<Scene> {
        let (mics, grid_spacing) = match (self.mics, &self.grid) {
            (Some(m), None) => (m, None),
            (None, Some(g)) => {
                if g.nx == 0 || g.ny == 0 {
                    return Err(Error::Config("grid: nx and ny must be positive".into()));
                }
                let xs: Vec<f64> = grid_axis(g.nx, g.width_m);
                let ys: Vec<f64> = grid_axis(g.ny, g.height_m);
                let mut mics = Vec::with_capacity(g.nx * g.ny);
                for &y in &ys {
                    for &x in &xs {
                        mics.push([x, y]);
                    }
                }
                let sx = if g.nx > 1 { g.width_m / (g.nx - 1) as f64 } else { f64::INFINITY };
                let sy = if g.ny > 1 { g.height_m / (g.ny - 1) as f64 } else { f64::INFINITY };
                let spacing = sx.min(sy);
                (mics, spacing.is_finite().then_some(spacing))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "scene: specify either `mics` or `grid`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "scene: one of `mics` or `grid` is required".into(),
                ))
            }
        };
        let m = mics.len();
        let device_costs = match self.device_cost {
            DeviceCost::Uniform(c) => vec![c; m],
            DeviceCost::PerMic(v) => {
                if v.len() != m {
                    return Err(Error::Config(format!(
                        "device_cost: expected {m} entries, got {}",
                        v.len()
                    )));
                }
                v
            }
        };

        let mut scene = Scene {
            mic_positions: mics,
            target_position: self.target,
            interferer_positions: self.interferers,
            fc_position: self.fc,
            target_psd: self.p_s,
            interferer_psds: vec![0.0; 0],
            self_noise_snr_db: self.self_noise_snr_db,
            speed_of_sound: self.speed_of_sound,
            device_costs,
            grid_spacing,
        };
        scene.interferer_psds = interferer_psds_for_sir(&scene, self.sir_db);
        scene.validate()?;
        Ok(scene)
    }
}

fn grid_axis(n: usize, extent: f64) -> Vec<f64> {
    if n == 1 {
        return vec![extent / 2.0];
    }
    (0..n).map(|i| extent * i as f64 / (n - 1) as f64).collect()
}

/// PSD per interferer so that its mean received power sits `sir_db` below the
/// mean received target power.
fn interferer_psds_for_sir(scene: &Scene, sir_db: f64) -> Vec<f64> {
    let target_pow = scene.mean_received_target_power();
    scene
        .interferer_positions
        .iter()
        .map(|&pos| {
            let m = scene.mic_count() as f64;
            let mean_gain: f64 = scene
                .mic_positions
                .iter()
                .map(|&p| {
                    let d = dist(p, pos);
                    1.0 / (d * d)
                })
                .sum::<f64>()
                / m;
            target_pow * 10f64.powf(-sir_db / 10.0) / mean_gain
        })
        .collect()
}
