//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each and exits non-zero if any failed.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stablegp::commands::{self, kms_demo, sweep_resolution, ResolutionRow};
use stablegp::config::{FitConfig, KmsDemoConfig, Method, PredictConfig, SelectConfig, SweepResolutionConfig};
use stablegp::stats::spearman;
use stablegp_core::covertree::{build, select_uniform, separation, CoverTreeOptions};
use stablegp_core::diagnostics::{cg_iteration_bound, cond_bound_with_noise, lambda_max_bound};
use stablegp_core::kernels::{Kernel, KernelFamily};
use stablegp_core::linalg::audit;
use stablegp_core::linalg::{
    cholesky, conjugate_gradient, dist, dot, hutchinson_trace, norm2, spectrum, symmetric_eigen, CgOptions,
    JitterPolicy,
};
use stablegp_core::sgp::{
    clustered_posterior, exact_posterior, fit_clustered, objective_and_gradient, training_objective, ExactGP,
    TraceMode,
};
use stablegp_core::{Dataset, Matrix};

const FAMILIES: [KernelFamily; 4] =
    [KernelFamily::SquaredExponential, KernelFamily::Matern12, KernelFamily::Matern32, KernelFamily::Matern52];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(n, d, |_, _| rng.random_range(lo..hi))
}

fn random_kernel(rng: &mut ChaCha8Rng, d: usize, ls_lo: f64, ls_hi: f64) -> Kernel {
    let family = FAMILIES[rng.random_range(0..FAMILIES.len())];
    let ls = (0..d).map(|_| log_uniform(rng, ls_lo, ls_hi)).collect();
    Kernel::new(family, log_uniform(rng, 0.5, 2.0), ls).unwrap()
}

/// Uniform grid of cell size `r`: any two points within distance `r` share or
/// neighbor a cell.
struct Grid {
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl Grid {
    fn new(points: &Matrix, cell: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.row_iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Grid { cell, buckets }
    }

    fn key(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|v| (v / cell).floor() as i64).collect()
    }

    fn neighbors(&self, p: &[f64], mut visit: impl FnMut(usize) -> bool) -> bool {
        let base = Self::key(p, self.cell);
        let d = base.len();
        let mut offset = vec![-1i64; d];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.buckets.get(&key) {
                for &i in ids {
                    if !visit(i) {
                        return false;
                    }
                }
            }
            let mut k = 0;
            while k < d && offset[k] == 1 {
                offset[k] = -1;
                k += 1;
            }
            if k == d {
                return true;
            }
            offset[k] += 1;
        }
    }
}

/// `true` when no two rows are closer than `r`.
fn separated(points: &Matrix, r: f64) -> bool {
    let grid = Grid::new(points, r);
    points.row_iter().enumerate().all(|(i, p)| grid.neighbors(p, |j| j == i || dist(p, points.row(j)) >= r))
}

/// `true` when every data row has a point within `r`.
fn covered(data: &Matrix, points: &Matrix, r: f64) -> bool {
    let grid = Grid::new(points, r);
    data.row_iter().all(|x| !grid.neighbors(x, |j| dist(x, points.row(j)) > r))
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let sizes = [100, 1000, 10_000];
    let combos = [(false, false), (true, false), (false, true), (true, true)];
    let (mut checks, mut failures) = (0usize, Vec::new());
    for case in 0..200 {
        let n = sizes[case % 3];
        let d = 1 + (case / 3) % 3;
        let data = if case % 2 == 0 {
            uniform_matrix(&mut rng, n, d, -5.0, 5.0)
        } else {
            let centers = uniform_matrix(&mut rng, 5, d, -10.0, 10.0);
            let spread = log_uniform(&mut rng, 0.05, 2.0);
            Matrix::from_fn(n, d, |i, j| centers[(i % 5, j)] + spread * rng.sample::<f64, _>(StandardNormal))
        };
        let scale = data.row_iter().map(norm2).fold(0.0, f64::max);
        let eps = scale * log_uniform(&mut rng, 0.02, 0.5);
        for &(lloyd, voronoi) in &combos {
            let opts = CoverTreeOptions { lloyd_averaging: lloyd, voronoi_repartition: voronoi, seed: case as u64 };
            let tree = build(&data, eps, opts).unwrap();
            for level in 0..=tree.depth {
                let r = tree.radii[level];
                let z = tree.level_points(level).unwrap();
                checks += 1;
                let exact_radius = r == eps * 2f64.powi((tree.depth - level) as i32);
                if !exact_radius || !separated(&z, r) || !covered(&data, &z, r) {
                    failures.push(format!("case {case} (n={n}, d={d}, lloyd={lloyd}, voronoi={voronoi}) level {level}"));
                }
            }
        }
    }
    let mut detail = format!("{checks} level checks over 200 datasets x 4 option sets, {} violations", failures.len());
    if let Some(f) = failures.first() {
        let _ = write!(detail, "; first: {f}");
    }
    outcome(failures.is_empty(), detail)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_mean, mut worst_cov) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let d = 1 + case % 3;
        let n = rng.random_range(20..=200);
        let x = uniform_matrix(&mut rng, n, d, 0.0, 4.0);
        let y: Vec<f64> = x.row_iter().map(|r| r.iter().map(|v| v.sin()).sum::<f64>() + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::new(x, y).unwrap();
        let kernel = random_kernel(&mut rng, d, 0.3, 1.5);
        let sigma2 = log_uniform(&mut rng, 0.05, 0.5);
        let z = if case % 2 == 0 {
            let tree = build(&data.x, log_uniform(&mut rng, 0.2, 1.0), CoverTreeOptions::default()).unwrap();
            tree.inducing_points(tree.depth).unwrap()
        } else {
            select_uniform(&data.x, rng.random_range(1..=n.min(30)), case as u64).unwrap()
        };
        let fit = fit_clustered(&data, &z, &kernel, sigma2).unwrap();
        let snapped = fit.model.z().select_rows(&fit.labels);
        let query = Matrix::from_fn(15, d, |_, _| rng.random_range(-1.0..5.0));
        let exact = exact_posterior(&ExactGP::new(kernel, sigma2, snapped, data.y.clone()).unwrap(), &query).unwrap();
        let approx = clustered_posterior(&fit.model, &query).unwrap();
        let mean_err = exact.mean.iter().zip(&approx.mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_mean = worst_mean.max(mean_err);
        worst_cov = worst_cov.max(exact.cov.sub(&approx.cov).unwrap().max_abs());
    }
    let pass = worst_mean <= 1e-8 && worst_cov <= 1e-8;
    outcome(pass, format!("100 instances; max |mean diff| {worst_mean:.2e}, max |cov diff| {worst_cov:.2e} (limit 1e-8)"))
}

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ns = vec![64, 128, 256, 512, 1024, 2048, 4096];
    let sweep = kms_demo(&KmsDemoConfig { rhos: vec![0.999], ns, trials: 5, seed: 0, out: dir.path().join("a.csv") })
        .unwrap();
    let outside: Vec<usize> = sweep.iter().filter(|r| !r.in_bracket).map(|r| r.n).collect();
    let bracket_ok = outside.is_empty();

    let at_256 = kms_demo(&KmsDemoConfig {
        rhos: vec![0.9, 0.99, 0.999],
        ns: vec![256],
        trials: 50,
        seed: 0,
        out: dir.path().join("b.csv"),
    })
    .unwrap();
    let medians: Vec<f64> = at_256.iter().map(|r| r.err_median).collect();
    let monotone = medians.windows(2).all(|w| w[0] < w[1]);

    let cond_at = |n: usize| sweep.iter().find(|r| r.n == n).unwrap().cond;
    let ratio = cond_at(4096) / cond_at(512);
    let plateau = ratio < 2.0;
    let detail = format!(
        "bracket: {} (outside at n={outside:?}); median errors at n=256 for rho=0.9,0.99,0.999: {:.2e}, {:.2e}, {:.2e} ({}); cond(4096)/cond(512) at rho=0.999 = {ratio:.3} ({})",
        if bracket_ok { "ok" } else { "violated" },
        medians[0],
        medians[1],
        medians[2],
        if monotone { "increasing" } else { "not increasing" },
        if plateau { "< 2" } else { ">= 2, plateau not reached" },
    );
    outcome(bracket_ok && monotone && plateau, detail)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut lam_viol, mut cond_viol) = (0, 0);
    let (mut tightest_lam, mut tightest_cond) = (0.0f64, 0.0f64);
    for case in 0..500 {
        let d = 1 + case % 3;
        let n = rng.random_range(30..=300);
        let width = log_uniform(&mut rng, 1.0, 10.0);
        let x = uniform_matrix(&mut rng, n, d, 0.0, width);
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let data = Dataset::new(x, y).unwrap();
        let kernel = random_kernel(&mut rng, d, 0.2, 2.0);
        let tree = build(&data.x, width * log_uniform(&mut rng, 0.02, 0.5), CoverTreeOptions::default()).unwrap();
        let level = rng.random_range(1..=tree.depth);
        let z = tree.inducing_points(level).unwrap();
        let model = fit_clustered(&data, &z, &kernel, log_uniform(&mut rng, 1e-3, 1.0)).unwrap().model;

        let lam_bound = lambda_max_bound(&kernel.decay_envelope(), separation(model.z()), d).unwrap();
        let observed_lam = spectrum(&kernel.gram_sym(model.z()).unwrap()).unwrap().lambda_max;
        let c_bound = cond_bound_with_noise(lam_bound, model.lambda()).unwrap();
        let observed_cond = spectrum(&model.shifted_gram().unwrap()).unwrap().cond;
        lam_viol += usize::from(observed_lam > lam_bound);
        cond_viol += usize::from(observed_cond > c_bound);
        tightest_lam = tightest_lam.max(observed_lam / lam_bound);
        tightest_cond = tightest_cond.max(observed_cond / c_bound);
    }
    outcome(
        lam_viol == 0 && cond_viol == 0,
        format!(
            "500 models; lambda_max violations {lam_viol}, cond violations {cond_viol}; max observed/bound ratios {tightest_lam:.3}, {tightest_cond:.3}"
        ),
    )
}

/// `Q diag(λ) Qᵀ` with `Q` from the eigenvectors of a random symmetric
/// matrix and `λ` log-uniform on `[1, cond]`, both ends included.
fn random_spd(rng: &mut ChaCha8Rng, n: usize, cond: f64) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let mut s = g.add(&g.transpose()).unwrap();
    s.symmetrize();
    let q = symmetric_eigen(&s).unwrap().vectors.unwrap();
    let lam: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0,
            _ if i == n - 1 => cond,
            _ => cond.powf(rng.random::<f64>()),
        })
        .collect();
    let scaled = Matrix::from_fn(n, n, |i, j| q[(i, j)] * lam[j]);
    let mut a = scaled.matmul(&q.transpose()).unwrap();
    a.symmetrize();
    a
}

fn criterion_5() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut over_bound, mut over_n, mut mismatched, mut unconverged) = (0, 0, 0, 0);
    let mut worst_over_n = (0usize, 0usize, 0.0f64);
    let mut worst_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=500);
        let cond = if n == 2 { 1.0 } else { log_uniform(&mut rng, 1.0, 1e6) };
        let a = random_spd(&mut rng, n, cond);
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let direct = cholesky(&a, &JitterPolicy::none()).unwrap().into_result().unwrap().solve(&b);
        let report = conjugate_gradient(|v, out| a.matvec_into(v, out), &b, &CgOptions::new(TOL, 50_000), None).unwrap();
        unconverged += usize::from(!report.converged);

        // A-norm target implied by the residual tolerance: ‖r‖ ≤ √λmax ‖e‖_A.
        let e0 = dot(&b, &direct).sqrt();
        let eps_a = TOL * norm2(&b) / cond.sqrt();
        let bound = cg_iteration_bound(cond, e0, eps_a).unwrap();
        over_bound += usize::from(report.iterations as f64 > bound.ceil());
        if report.iterations > n {
            over_n += 1;
            if report.iterations as f64 / n as f64 > worst_over_n.1 as f64 / worst_over_n.0.max(1) as f64 {
                worst_over_n = (n, report.iterations, cond);
            }
        }
        let diff: Vec<f64> = report.solution.iter().zip(&direct).map(|(x, y)| x - y).collect();
        let rel = norm2(&diff) / norm2(&direct);
        worst_err = worst_err.max(rel);
        mismatched += usize::from(rel > 1e-6);
    }
    let detail = format!(
        "100 systems at residual tol {TOL:e}; unconverged {unconverged}; beyond iteration bound {over_bound}; beyond n iterations {over_n} (worst: n={}, {} iterations, cond {:.2e}); direct-solve mismatches {mismatched} (max rel err {worst_err:.2e})",
        worst_over_n.0, worst_over_n.1, worst_over_n.2
    );
    outcome(unconverged == 0 && over_bound == 0 && over_n == 0 && mismatched == 0, detail)
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = SweepResolutionConfig {
        dims: vec![1, 2],
        n: 1000,
        epsilons: vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6],
        seeds: (0..10).collect(),
        sigma2: 0.1,
        family: stablegp::config::Family::Se,
        out: dir.path().join("sweep.csv"),
    };
    let rows = sweep_resolution(&config).unwrap();
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    let mut groups: HashMap<(usize, u64), Vec<&ResolutionRow>> = HashMap::new();
    for r in &rows {
        groups.entry((r.d, r.seed)).or_default().push(r);
    }
    let (mut m_strict, mut w2_rho, mut cond_rho) = (true, Vec::new(), Vec::new());
    for group in groups.values_mut() {
        group.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        m_strict &= group.windows(2).all(|w| w[1].m < w[0].m);
        let eps: Vec<f64> = group.iter().map(|r| r.epsilon).collect();
        w2_rho.push(spearman(&eps, &group.iter().map(|r| r.w2).collect::<Vec<_>>()));
        cond_rho.push(spearman(&eps, &group.iter().map(|r| r.cond).collect::<Vec<_>>()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (w2_pooled, cond_pooled) = (mean(&w2_rho), mean(&cond_rho));
    let pass = failed == 0 && m_strict && w2_pooled >= 0.8 && cond_pooled <= -0.5;
    outcome(
        pass,
        format!(
            "{} rows ({failed} failed); M strictly decreasing: {m_strict}; pooled Spearman(eps, W2) = {w2_pooled:.3} (>= 0.8); pooled Spearman(eps, cond) = {cond_pooled:.3} (<= -0.5)",
            rows.len()
        ),
    )
}

fn fd_gradient_error(model: &stablegp_core::sgp::ClusteredModel, data: &Dataset) -> f64 {
    let analytic = objective_and_gradient(model, data, data.len(), TraceMode::Exact).unwrap().gradient;
    let np = model.kernel().num_params();
    let mut params = model.kernel().log_params();
    params.push(model.sigma2().ln());
    let eval = |p: &[f64]| {
        let kernel = model.kernel().with_log_params(&p[..np]).unwrap();
        let m = model.with_hyperparameters(kernel, p[np].exp()).unwrap();
        training_objective(&m, data, data.len(), TraceMode::Exact).unwrap().value
    };
    let h = 1e-5;
    let numeric: Vec<f64> = (0..params.len())
        .map(|i| {
            let (mut up, mut down) = (params.clone(), params.clone());
            up[i] += h;
            down[i] -= h;
            (eval(&up) - eval(&down)) / (2.0 * h)
        })
        .collect();
    let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diff / numeric.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn criterion_7() -> Outcome {
    let identity = hutchinson_trace(|v, out| out.copy_from_slice(v), 64, 10, 0).unwrap();
    let identity_ok = identity.estimate == 64.0 && identity.stderr == 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut outside = 0;
    for case in 0..50 {
        let n = rng.random_range(5..=80);
        let g = Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let mut a = g.tr_matmul(&g).unwrap().scaled(1.0 / n as f64);
        a.add_to_diagonal(0.1);
        a.symmetrize();
        let est = hutchinson_trace(|v, out| a.matvec_into(v, out), n, 200, case).unwrap();
        outside += usize::from((est.estimate - a.trace()).abs() > 3.0 * est.stderr);
    }

    let mut worst_grad = 0.0f64;
    for case in 0..10 {
        let d = 1 + case % 2;
        let n = rng.random_range(10..=40);
        let x = uniform_matrix(&mut rng, n, d, 0.0, 3.0);
        let y: Vec<f64> = x.row_iter().map(|r| r[0].cos() + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::new(x, y).unwrap();
        let kernel = random_kernel(&mut rng, d, 0.4, 1.5);
        let z = select_uniform(&data.x, rng.random_range(3..=10.min(n)), case as u64).unwrap();
        let model = fit_clustered(&data, &z, &kernel, log_uniform(&mut rng, 0.05, 0.5)).unwrap().model;
        worst_grad = worst_grad.max(fd_gradient_error(&model, &data));
    }
    let pass = identity_ok && outside == 0 && worst_grad <= 1e-4;
    outcome(
        pass,
        format!(
            "identity exact: {identity_ok}; {outside}/50 random SPD estimates outside 3 standard errors; max relative gradient error vs finite differences {worst_grad:.2e} (limit 1e-4)"
        ),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let x = uniform_matrix(&mut rng, 400, 2, -3.0, 3.0);
    let y: Vec<f64> = x.row_iter().map(|r| (r[0] * r[1]).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    stablegp::io::write_dataset_csv(path("data.csv"), &Dataset::new(x.clone(), y).unwrap()).unwrap();
    let query = Dataset::new(uniform_matrix(&mut rng, 30, 2, -3.0, 3.0), vec![0.0; 30]).unwrap();
    stablegp::io::write_dataset_csv(path("query.csv"), &query).unwrap();
    let kernel = Kernel::isotropic(KernelFamily::Matern32, 1.0, 1.0, 2).unwrap();
    stablegp::io::write_json(path("kernel.json"), &kernel).unwrap();

    let before = audit::snapshot();
    commands::cmd_select(&SelectConfig {
        data: path("data.csv"),
        method: Method::Covertree,
        epsilon: Some(0.4),
        m: None,
        seed: 0,
        lloyd: true,
        voronoi: true,
        kmeans_iters: 0,
        out: path("z.json"),
    })
    .unwrap();
    for (probes, out) in [(0, "exact.json"), (8, "model.json")] {
        commands::cmd_fit(&FitConfig {
            data: path("data.csv"),
            inducing: path("z.json"),
            kernel: path("kernel.json"),
            sigma2: 0.1,
            steps: 5,
            batch: 200,
            step_size: 0.01,
            probes,
            seed: 0,
            out: path(out),
            log: None,
        })
        .unwrap();
    }
    commands::cmd_predict(&PredictConfig { model: path("model.json"), query: path("query.csv"), out: path("pred.csv") })
        .unwrap();
    let model: commands::FitOutput = stablegp::io::read_json(path("model.json")).unwrap();
    clustered_posterior(&model.model, &query.x).unwrap();
    let counts = audit::snapshot().since(&before);
    outcome(
        counts.bare == 0 && counts.shifted > 0,
        format!("select + fit (exact and Hutchinson) + predict + posterior: {} shifted solves, {} bare solves", counts.shifted, counts.bare),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("cover-tree separation and resolution guarantees", criterion_1),
        ("clustered posterior equals exact posterior on snapped data", criterion_2),
        ("KMS condition numbers and solve errors", criterion_3),
        ("eigenvalue and condition number bound soundness", criterion_4),
        ("conjugate gradient discipline", criterion_5),
        ("resolution sweep trends", criterion_6),
        ("stochastic trace and gradient estimators", criterion_7),
        ("no solves against the bare inducing kernel matrix", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        failed += usize::from(!result.pass);
        println!(
            "criterion {}: {} [{}] {} ({:.1} s)",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            name,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
