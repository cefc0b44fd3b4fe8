//! Central finite-difference verification of reverse-mode gradients.
//!
//! The scalar probed is `sum(y * R)` for a fixed random `R`, so every output
//! element contributes. For each input and parameter tensor the analytic and
//! numeric gradients are compared on (a sample of) its coordinates with the
//! norm-wise relative error `|g_a - g_n| / max(|g_a|, |g_n|, floor)`. The
//! floor keeps gradients that vanish identically (a bias feeding a softmax
//! that is invariant to it, say) from comparing roundoff against roundoff.
//! It is the larger of the configured value and `sqrt(eps)` of the analytic
//! precision times the largest gradient norm in the check.
//!
//! Central differences are only meaningful where the function is smooth over
//! `[x - eps, x + eps]`. Every probe hashes the graph's piecewise decisions;
//! when a perturbed evaluation lands on a different piece than the
//! unperturbed one, the step is shrunk for that coordinate.

pub mod suite;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::param::ParamStore;
use crate::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tolerance: f64,
    /// Coordinates probed per tensor; larger tensors are subsampled.
    pub max_coords: usize,
    /// Absolute norm below which a gradient counts as zero.
    pub floor: f64,
    pub seed: u64,
    /// Run the graph in training mode with this dropout seed.
    pub train_seed: Option<u64>,
    /// Inject a sign error into the backward rule of this op.
    pub fault: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            tolerance: 1e-3,
            max_coords: 48,
            floor: 1e-7,
            seed: 0x5eed,
            train_seed: None,
            fault: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorError {
    pub tensor: String,
    pub rel_error: f64,
    /// Coordinates compared.
    pub coords: usize,
    /// Coordinates whose step had to shrink to stay on one smooth piece.
    pub shrunk: usize,
    /// Coordinates left out because they sit on a kink.
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tensors: Vec<TensorError>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn worst_tensor(&self) -> Option<&TensorError> {
        self.tensors.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// A computation that can be evaluated at any precision, for checks whose
/// finite differences run in `f64` while the analytic pass uses `T`.
pub trait GradFn {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>, inputs: &[Var]) -> Result<Var>;
}

fn make_graph<'s, T: Scalar>(store: &'s ParamStore<T>, cfg: &GradCheckConfig) -> Graph<'s, T> {
    let mut g = Graph::new(store).track_branches();
    if let Some(seed) = cfg.train_seed {
        g = g.training(seed);
    }
    if let Some(op) = &cfg.fault {
        g.inject_sign_fault(op);
    }
    g
}

/// `sum(y * proj)` in f64 plus the branch signature of the evaluation.
fn probe<T: Scalar, F>(store: &ParamStore<T>, inputs: &[Tensor<T>], proj: &[f64], cfg: &GradCheckConfig, f: &F) -> Result<(f64, Option<u64>)>
where
    F: Fn(&mut Graph<'_, T>, &[Var]) -> Result<Var>,
{
    let mut g = make_graph(store, cfg);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let y = f(&mut g, &vars)?;
    let l = g.value(y).data().iter().zip(proj).map(|(a, b)| a.wide() * b).sum();
    Ok((l, g.branch_signature()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_error(a: &[f64], n: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(n)).max(floor)
}

/// Checks `f` with respect to every element of `inputs` and every
/// parameter of `store` that `f` reads, all in precision `T`.
pub fn check_gradients<T: Scalar, F>(name: &str, store: &ParamStore<T>, inputs: &[Tensor<T>], cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, T>, &[Var]) -> Result<Var>,
{
    run(name, store, inputs, store, inputs, cfg, &f, &f)
}

/// Analytic gradients in `T` against finite differences taken in `f64` on
/// a widened copy of the same parameters and inputs.
pub fn check_gradients_mixed<T: Scalar, F: GradFn>(name: &str, store: &ParamStore<T>, inputs: &[Tensor<T>], cfg: &GradCheckConfig, f: &F) -> Result<GradCheckReport> {
    let wide_store = store.cast::<f64>();
    let wide_inputs: Vec<Tensor<f64>> = inputs.iter().map(|t| t.cast()).collect();
    run(name, store, inputs, &wide_store, &wide_inputs, cfg, &|g: &mut Graph<'_, T>, v: &[Var]| f.eval(g, v), &|g: &mut Graph<'_, f64>, v: &[Var]| f.eval(g, v))
}

struct Numeric<'a, N: Scalar, F> {
    store: ParamStore<N>,
    inputs: Vec<Tensor<N>>,
    proj: &'a [f64],
    cfg: &'a GradCheckConfig,
    f: &'a F,
    base: Option<u64>,
}

enum Slot {
    Input(usize),
    Param(crate::ParamId),
}

impl<N: Scalar, F> Numeric<'_, N, F>
where
    F: Fn(&mut Graph<'_, N>, &[Var]) -> Result<Var>,
{
    fn cell(&mut self, slot: &Slot, c: usize) -> &mut N {
        match *slot {
            Slot::Input(i) => &mut self.inputs[i].data_mut()[c],
            Slot::Param(id) => &mut self.store.value_mut(id).data_mut()[c],
        }
    }

    fn eval(&self) -> Result<(f64, Option<u64>)> {
        probe(&self.store, &self.inputs, self.proj, self.cfg, self.f)
    }

    /// Central difference at coordinate `c`. If either side lands on another
    /// smooth piece the step is shrunk; `None` when no step up to 1000x
    /// smaller avoids the kink.
    fn derivative(&mut self, slot: &Slot, c: usize) -> Result<(Option<f64>, bool)> {
        let orig = *self.cell(slot, c);
        let mut step = self.cfg.eps;
        let mut shrunk = false;
        for _ in 0..4 {
            let (up, down) = (N::of(orig.wide() + step), N::of(orig.wide() - step));
            *self.cell(slot, c) = up;
            let (lp, sp) = self.eval()?;
            *self.cell(slot, c) = down;
            let (lm, sm) = self.eval()?;
            *self.cell(slot, c) = orig;
            if sp == self.base && sm == self.base {
                // divide by the step actually representable in N
                return Ok((Some((lp - lm) / (up.wide() - down.wide())), shrunk));
            }
            shrunk = true;
            step /= 10.0;
        }
        Ok((None, shrunk))
    }
}

#[allow(clippy::too_many_arguments)]
fn run<A: Scalar, N: Scalar, FA, FN>(
    name: &str,
    store: &ParamStore<A>,
    inputs: &[Tensor<A>],
    num_store: &ParamStore<N>,
    num_inputs: &[Tensor<N>],
    cfg: &GradCheckConfig,
    fa: &FA,
    fn_: &FN,
) -> Result<GradCheckReport>
where
    FA: Fn(&mut Graph<'_, A>, &[Var]) -> Result<Var>,
    FN: Fn(&mut Graph<'_, N>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // analytic pass
    let (proj, input_grads, param_grads) = {
        let mut g = make_graph(store, cfg);
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone().with_requires_grad(true))).collect();
        let y = fa(&mut g, &vars)?;
        let proj = Tensor::from_fn(g.shape(y), |_| A::of(StandardNormal.sample(&mut rng)))?;
        let l = g.dot_const(y, &proj)?;
        g.backward(l)?;
        let ig: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| match g.grad(v) {
                Some(gr) => gr.iter().map(|x| x.wide()).collect(),
                None => vec![0.0; t.numel()],
            })
            .collect();
        let mut pg: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        for (id, gr) in g.param_grads() {
            pg[id.index()] = gr.iter().map(|x| x.wide()).collect();
        }
        let proj: Vec<f64> = proj.data().iter().map(|v| v.wide()).collect();
        (proj, ig, pg)
    };

    let mut num = Numeric {
        store: num_store.clone(),
        inputs: num_inputs.to_vec(),
        proj: &proj,
        cfg,
        f: fn_,
        base: None,
    };
    num.base = num.eval()?.1;

    let mut slots: Vec<(Slot, String, &[f64])> = (0..inputs.len()).map(|i| (Slot::Input(i), format!("input{i}"), input_grads[i].as_slice())).collect();
    for (id, p) in store.iter() {
        slots.push((Slot::Param(id), p.name.clone(), param_grads[id.index()].as_slice()));
    }

    let mut probed = Vec::with_capacity(slots.len());
    for (slot, tensor, analytic_all) in slots {
        let coords = pick(analytic_all.len(), cfg.max_coords, &mut rng);
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        let (mut shrunk, mut skipped) = (0, 0);
        for &c in &coords {
            let (d, s) = num.derivative(&slot, c)?;
            shrunk += s as usize;
            match d {
                Some(d) => {
                    numeric.push(d);
                    analytic.push(analytic_all[c]);
                }
                None => skipped += 1,
            }
        }
        probed.push((tensor, analytic, numeric, shrunk, skipped));
    }

    let largest = probed.iter().map(|p| norm(&p.1)).fold(0.0, f64::max);
    let floor = cfg.floor.max(A::epsilon().wide().sqrt() * largest);
    let tensors: Vec<TensorError> = probed
        .into_iter()
        .map(|(tensor, analytic, numeric, shrunk, skipped)| TensorError {
            tensor,
            rel_error: rel_error(&analytic, &numeric, floor),
            coords: analytic.len(),
            shrunk,
            skipped,
        })
        .collect();

    let max_rel_error = tensors.iter().map(|t| t.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_error,
        tensors,
        tolerance: cfg.tolerance,
    })
}

fn pick(n: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= max {
        (0..n).collect()
    } else {
        let mut v = sample(rng, n, max).into_vec();
        v.sort_unstable();
        v
    }
}
