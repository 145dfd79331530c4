use crate::exec::Exec;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Edge length of the initial simplex around the start point.
    pub step: f64,
    /// Stop once every vertex is within this distance (max-norm) of the best.
    pub x_tol: f64,
    /// Stop once the objective spread across the simplex is below this.
    pub f_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            step: 0.5,
            x_tol: 1e-4,
            f_tol: 1e-10,
            max_evals: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    /// A tolerance was met before the evaluation budget ran out.
    pub converged: bool,
}

/// Unconstrained Nelder-Mead with the standard coefficients (reflection 1,
/// expansion 2, contraction 1/2, shrink 1/2). Vertices of the initial simplex
/// and of a shrink are evaluated through `exec`; every other decision is
/// sequential, so results do not depend on the execution mode.
pub fn minimize<F>(f: F, x0: &[f64], opts: &NelderMeadOptions, exec: Exec) -> NelderMeadResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = x0.len();
    let mut evals = 0;
    let mut points: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..dim {
        let mut p = x0.to_vec();
        p[k] += opts.step;
        points.push(p);
    }
    let values = exec.map(&points, |p| f(p));
    evals += points.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = points.into_iter().zip(values).collect();
    let mut iterations = 0;
    let mut converged = false;

    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].clone();
        let spread = simplex.iter().map(|v| (v.1 - best.1).abs()).fold(0.0, f64::max);
        let size = simplex
            .iter()
            .flat_map(|v| v.0.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size < opts.x_tol || spread < opts.f_tol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
        iterations += 1;

        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|v| v.0[k]).sum::<f64>() / dim as f64)
            .collect();
        let reflected = combine(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < best.1 {
            let expanded = combine(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            evals += 1;
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst.1 {
            let c = combine(&centroid, &reflected, 0.5);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = combine(&centroid, &worst.0, 0.5);
            let fc = f(&c);
            (c, fc)
        };
        evals += 1;
        if fc < worst.1.min(fr) {
            simplex[dim] = (contracted, fc);
            continue;
        }
        let shrunk: Vec<Vec<f64>> = simplex[1..].iter().map(|v| combine(&best.0, &v.0, 0.5)).collect();
        let values = exec.map(&shrunk, |p| f(p));
        evals += shrunk.len();
        for (slot, (p, v)) in simplex[1..].iter_mut().zip(shrunk.into_iter().zip(values)) {
            *slot = (p, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        evals,
        iterations,
        converged,
    }
}
