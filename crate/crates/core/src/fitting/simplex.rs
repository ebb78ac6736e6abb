//! Nelder-Mead downhill simplex with reflection 1, expansion 2,
//! contraction 0.5 and shrink 0.5.

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Converged when every vertex lies within `xtol·max(1, |x_best|)` of the
    /// best vertex in every coordinate.
    pub xtol: f64,
    /// Fresh simplices built around the optimum after convergence, to escape
    /// a collapsed simplex.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_evals: 40_000, xtol: 1e-10, restarts: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best objective after each iteration.
    pub history: Vec<f64>,
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], steps: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let mut evals = 0;
    let mut history = Vec::new();
    let mut best_x = x0.to_vec();
    let mut scale = 1.0;
    let mut converged = false;
    let mut best_f = f64::INFINITY;
    for round in 0..=opts.restarts {
        let steps: Vec<f64> = steps.iter().map(|s| s * scale).collect();
        let (x, fx, ok) = run(&mut f, &best_x, &steps, opts, &mut evals, &mut history);
        let improved = fx < best_f;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = ok;
        if !ok || (round > 0 && !improved) {
            break;
        }
        scale *= 0.1;
    }
    SimplexResult { x: best_x, f: best_f, evals, converged, history }
}

fn run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    steps: &[f64],
    opts: &SimplexOptions,
    evals: &mut usize,
    history: &mut Vec<f64>,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if steps[i] != 0.0 { steps[i] } else { 1e-3 };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, evals)).collect();

    loop {
        // stable sort keeps the earlier vertex first on ties
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        history.push(vals[0]);

        let spread_ok = (1..=n).all(|i| {
            (0..n).all(|k| (pts[i][k] - pts[0][k]).abs() <= opts.xtol * pts[0][k].abs().max(1.0))
        });
        if spread_ok {
            return (pts[0].clone(), vals[0], true);
        }
        if *evals >= opts.max_evals {
            return (pts[0].clone(), vals[0], false);
        }

        let centroid: Vec<f64> = (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + c * (pts[n][k] - centroid[k])).collect() };

        let xr = along(-REFLECT);
        let fr = eval(&xr, evals);
        if fr < vals[0] {
            let xe = along(-REFLECT * EXPAND);
            let fe = eval(&xe, evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-REFLECT * CONTRACT);
            let fc = eval(&xc, evals);
            (xc, fc)
        } else {
            let xc = along(CONTRACT);
            let fc = eval(&xc, evals);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            pts[i] = (0..n).map(|k| pts[0][k] + SHRINK * (pts[i][k] - pts[0][k])).collect();
            vals[i] = eval(&pts[i], evals);
        }
    }
}
