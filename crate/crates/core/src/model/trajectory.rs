//! Trajectory simulation and its on-disk formats.
//!
//! Random streams come from `ChaCha8Rng::seed_from_u64(seed)`, which is
//! specified bit-for-bit and therefore reproducible across platforms.
//!
//! Binary layout (little endian): the 8 magic bytes `BMCTRAJ1`, the state
//! count `n` as `u32`, the path length `ell` as `u64`, then `ell + 1` state
//! indices as `u32`. The text layout is one decimal state index per line.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BmcInstance, ModelError};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"BMCTRAJ1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    /// Number of states of the chain that produced the path.
    pub n: usize,
    /// `X_0, …, X_ell`.
    pub states: Vec<u32>,
    /// Number of transitions.
    pub ell: usize,
    /// Seed of the simulation, when known.
    pub seed: Option<u64>,
}

/// Law of `X_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartRule {
    /// Stationary distribution `Π`, so that `E[N̂] = ℓ Π_x P_xy` exactly.
    #[default]
    Stationary,
    /// Always state 0.
    FixedZero,
    /// Uniform on `[n]`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryFormat {
    Binary,
    Text,
}

impl TrajectoryFormat {
    /// `.txt` selects text, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => TrajectoryFormat::Text,
            _ => TrajectoryFormat::Binary,
        }
    }
}

impl Trajectory {
    pub fn new(n: usize, states: Vec<u32>) -> Result<Self, ModelError> {
        if states.is_empty() {
            return Err(ModelError::Format("trajectory needs at least one state".into()));
        }
        if let Some(bad) = states.iter().find(|&&s| s as usize >= n) {
            return Err(ModelError::Format(format!("state {bad} out of range for n = {n}")));
        }
        let ell = states.len() - 1;
        Ok(Self {
            n,
            states,
            ell,
            seed: None,
        })
    }

    /// The sub-path `X_from, …, X_to` (inclusive) over the same state space.
    pub fn window(&self, from: usize, to: usize) -> Trajectory {
        Trajectory {
            n: self.n,
            states: self.states[from..=to].to_vec(),
            ell: to - from,
            seed: self.seed,
        }
    }

    /// Applies a relabeling `x ↦ perm[x]` of the state space.
    pub fn relabeled(&self, perm: &[usize]) -> Trajectory {
        Trajectory {
            n: self.n,
            states: self.states.iter().map(|&s| perm[s as usize] as u32).collect(),
            ell: self.ell,
            seed: self.seed,
        }
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(TRAJECTORY_MAGIC)?;
        out.write_all(&(self.n as u32).to_le_bytes())?;
        out.write_all(&(self.ell as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.states.len() * 4);
        for s in &self.states {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self, ModelError> {
        let io = |e: std::io::Error| ModelError::Format(e.to_string());
        let mut header = [0u8; 20];
        input.read_exact(&mut header).map_err(io)?;
        if &header[..8] != TRAJECTORY_MAGIC {
            return Err(ModelError::Format("bad magic".into()));
        }
        let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let ell = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        input.read_to_end(&mut body).map_err(io)?;
        if body.len() != (ell + 1) * 4 {
            return Err(ModelError::Format(format!(
                "expected {} states, found {} bytes",
                ell + 1,
                body.len()
            )));
        }
        let states = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Trajectory::new(n, states)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.states {
            writeln!(out, "{s}")?;
        }
        Ok(())
    }

    /// Reads one index per line. Without `n`, the state count is `max + 1`.
    pub fn read_text<R: BufRead>(input: R, n: Option<usize>) -> Result<Self, ModelError> {
        let mut states = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ModelError::Format(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let s: u32 = line.parse().map_err(|e| {
                ModelError::Format(format!("line {}: {e}", lineno + 1))
            })?;
            states.push(s);
        }
        let n = n.unwrap_or_else(|| states.iter().max().map_or(0, |&m| m as usize + 1));
        Trajectory::new(n, states)
    }
}

/// Mixture `(1 − ε) P_BMC + ε · uniform`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub epsilon: f64,
}

impl PerturbationSpec {
    pub fn new(epsilon: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(ModelError::InvalidParameter(format!(
                "perturbation epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }
}

/// Transition sampler for a possibly perturbed block Markov chain.
///
/// Per step, when `ε > 0`, one uniform draw decides between the uniform
/// kernel (`u < ε`) and the block kernel. At `ε = 0` no such draw is made,
/// so the random stream and the output coincide with [`simulate`].
#[derive(Debug, Clone)]
pub struct PerturbedSampler<'a> {
    instance: &'a BmcInstance,
    epsilon: f64,
    cumulative: Vec<Vec<f64>>,
    start: StartRule,
}

impl<'a> PerturbedSampler<'a> {
    pub fn new(instance: &'a BmcInstance, spec: PerturbationSpec) -> Self {
        let cumulative = instance
            .params
            .p
            .iter()
            .map(|row| cumulative(row))
            .collect();
        Self {
            instance,
            epsilon: spec.epsilon,
            cumulative,
            start: StartRule::Stationary,
        }
    }

    pub fn with_start(mut self, start: StartRule) -> Self {
        self.start = start;
        self
    }

    pub fn simulate(&self, ell: usize, seed: u64) -> Trajectory {
        let inst = self.instance;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut states = Vec::with_capacity(ell + 1);
        let first = match self.start {
            StartRule::Stationary => {
                let k = draw_index(&cumulative(&inst.pi), &mut rng);
                uniform_in_cluster(inst, k, &mut rng)
            }
            StartRule::FixedZero => 0,
            StartRule::Uniform => rng.random_range(0..inst.n),
        };
        states.push(first as u32);
        let mut x = first;
        for _ in 0..ell {
            x = if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
                rng.random_range(0..inst.n)
            } else {
                let j = draw_index(&self.cumulative[inst.sigma[x]], &mut rng);
                uniform_in_cluster(inst, j, &mut rng)
            };
            states.push(x as u32);
        }
        Trajectory {
            n: inst.n,
            states,
            ell,
            seed: Some(seed),
        }
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Inverse-CDF draw; rounding slack at the top lands on the last index with
/// positive mass.
fn draw_index<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cum[cum.len() - 1];
    cum.iter().position(|&c| u < c).unwrap_or_else(|| {
        let top = cum[cum.len() - 1];
        cum.iter().position(|&c| c == top).unwrap_or(0)
    })
}

fn uniform_in_cluster<R: Rng + ?Sized>(inst: &BmcInstance, k: usize, rng: &mut R) -> usize {
    inst.offsets[k] + rng.random_range(0..inst.cluster_sizes[k])
}

/// Simulates `ell` transitions started from the stationary law.
pub fn simulate(instance: &BmcInstance, ell: usize, seed: u64) -> Trajectory {
    simulate_with_start(instance, ell, seed, StartRule::Stationary)
}

pub fn simulate_with_start(
    instance: &BmcInstance,
    ell: usize,
    seed: u64,
    start: StartRule,
) -> Trajectory {
    PerturbedSampler::new(instance, PerturbationSpec { epsilon: 0.0 })
        .with_start(start)
        .simulate(ell, seed)
}
