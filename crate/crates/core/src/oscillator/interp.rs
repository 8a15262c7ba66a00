/// Values of a 1-periodic function on the grid `i/n`, read back with local
/// eight-point Lagrange interpolation.
#[derive(Clone, Debug, Default)]
pub struct PeriodicTable {
    values: Vec<f64>,
}

const STENCIL: usize = 8;
const OFFSET: isize = 3;

// 1 / prod_{m != i} (i - m) for nodes -3..=4
const DENOM: [f64; STENCIL] = {
    let mut d = [0.0; STENCIL];
    let mut i = 0;
    while i < STENCIL {
        let mut prod: i64 = 1;
        let mut m = 0;
        while m < STENCIL {
            if m != i {
                prod *= i as i64 - m as i64;
            }
            m += 1;
        }
        d[i] = 1.0 / prod as f64;
        i += 1;
    }
    d
};

impl PeriodicTable {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(values.len() >= STENCIL, "periodic table needs at least {STENCIL} nodes");
        PeriodicTable { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn eval(&self, phase: f64) -> f64 {
        let n = self.values.len();
        let x = phase.rem_euclid(1.0) * n as f64;
        let j = x.floor();
        let t = x - j;
        let j = j as isize;
        if t == 0.0 {
            return self.values[(j as usize) % n];
        }
        // numerator prod_m (t - x_m), then divide by (t - x_i)
        let mut full = 1.0;
        for m in 0..STENCIL {
            full *= t - (m as isize - OFFSET) as f64;
        }
        let mut s = 0.0;
        for i in 0..STENCIL {
            let xi = (i as isize - OFFSET) as f64;
            let idx = (j + i as isize - OFFSET).rem_euclid(n as isize) as usize;
            s += self.values[idx] * DENOM[i] * full / (t - xi);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_low_degree_trig() {
        let n = 64;
        let f = |x: f64| (std::f64::consts::TAU * x).sin() + 0.3 * (2.0 * std::f64::consts::TAU * x).cos();
        let t = PeriodicTable::new((0..n).map(|i| f(i as f64 / n as f64)).collect());
        for &x in &[0.013, 0.5, 0.777, 0.999, -0.2] {
            assert!((t.eval(x) - f(x.rem_euclid(1.0))).abs() < 1e-8);
        }
    }

    #[test]
    fn error_falls_with_refinement() {
        let f = |x: f64| (std::f64::consts::TAU * x).sin().exp();
        let err = |n: usize| {
            let t = PeriodicTable::new((0..n).map(|i| f(i as f64 / n as f64)).collect());
            (0..n).map(|i| (i as f64 + 0.5) / n as f64).map(|x| (t.eval(x) - f(x)).abs()).fold(0.0, f64::max)
        };
        let (a, b) = (err(32), err(64));
        assert!(b < a / 2.0, "{a} {b}");
    }
}
