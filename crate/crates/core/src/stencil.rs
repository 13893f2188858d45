//! Finite-difference operators on uniform grids: centered interior stencils
//! with either one-sided or parity-reflected closures, plus Kreiss-Oliger
//! dissipation.

/// Finite-difference weights for the `order`-th derivative at `x0` from the
/// nodes `xs` (Fornberg's recursion).
pub fn fornberg_weights(x0: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > order, "need more nodes than the derivative order");
    let m = order;
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// How rows near the left end are closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeftClosure {
    /// Biased/one-sided stencils using only interior points.
    OneSided,
    /// Centered stencils with ghost values `f(-x) = parity * f(x)`.
    Parity(f64),
}

/// A derivative operator of fixed stencil width on `n` uniformly spaced points.
#[derive(Debug, Clone)]
pub struct Derivative {
    n: usize,
    width: usize,
    /// Rows `0..half`, each with `(start, weights)`.
    left: Vec<(usize, Vec<f64>)>,
    right: Vec<(usize, Vec<f64>)>,
    central: Vec<f64>,
}

impl Derivative {
    /// `order`-th derivative with a `width`-point stencil (odd) and spacing `h`.
    pub fn new(n: usize, h: f64, order: usize, width: usize, left_closure: LeftClosure) -> Self {
        assert!(width % 2 == 1 && n >= width, "stencil width must be odd and fit the grid");
        let half = width / 2;
        let scale = h.powi(order as i32);
        let nodes = |lo: isize| (lo..lo + width as isize).map(|k| k as f64).collect::<Vec<_>>();

        let central: Vec<f64> = fornberg_weights(0.0, &nodes(-(half as isize)), order)
            .into_iter()
            .map(|w| w / scale)
            .collect();

        let mut left = Vec::with_capacity(half);
        for i in 0..half {
            match left_closure {
                LeftClosure::OneSided => {
                    let w = fornberg_weights(i as f64, &nodes(0), order);
                    left.push((0, w.into_iter().map(|w| w / scale).collect()));
                }
                LeftClosure::Parity(parity) => {
                    let mut folded = vec![0.0; width];
                    for (k, w) in central.iter().enumerate() {
                        let j = i as isize + k as isize - half as isize;
                        if j < 0 {
                            folded[(-j) as usize] += parity * w;
                        } else {
                            folded[j as usize] += w;
                        }
                    }
                    left.push((0, folded));
                }
            }
        }

        let mut right = Vec::with_capacity(half);
        let start = n - width;
        for i in n - half..n {
            let w = fornberg_weights((i - start) as f64, &nodes(0), order);
            right.push((start, w.into_iter().map(|w| w / scale).collect()));
        }

        Derivative {
            n,
            width,
            left,
            right,
            central,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        let half = self.width / 2;
        for (i, (start, w)) in self.left.iter().enumerate() {
            out[i] = dot(w, &f[*start..*start + self.width]);
        }
        let c = &self.central;
        if self.width == 7 {
            // hot path of every evolution
            for i in half..self.n - half {
                let s = &f[i - 3..i + 4];
                out[i] = c[0] * s[0]
                    + c[1] * s[1]
                    + c[2] * s[2]
                    + c[3] * s[3]
                    + c[4] * s[4]
                    + c[5] * s[5]
                    + c[6] * s[6];
            }
        } else {
            for i in half..self.n - half {
                out[i] = dot(c, &f[i - half..i + half + 1]);
            }
        }
        for (k, (start, w)) in self.right.iter().enumerate() {
            out[self.n - half + k] = dot(w, &f[*start..*start + self.width]);
        }
    }

    /// Value of row `i` applied to `f`.
    pub fn apply_at(&self, f: &[f64], i: usize) -> f64 {
        let half = self.width / 2;
        if i < half {
            let (s, w) = &self.left[i];
            dot(w, &f[*s..*s + self.width])
        } else if i >= self.n - half {
            let (s, w) = &self.right[i - (self.n - half)];
            dot(w, &f[*s..*s + self.width])
        } else {
            dot(&self.central, &f[i - half..i + half + 1])
        }
    }
}

fn dot(w: &[f64], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// Eighth-difference Kreiss-Oliger dissipation `-sigma/(256 h) delta^8 f`,
/// added on rows at least four points away from either end. Formally
/// `O(h^7)`, so it does not lower a sixth-order scheme.
#[derive(Debug, Clone, Copy)]
pub struct Dissipation {
    pub sigma: f64,
    coeff: f64,
}

const KO8: [f64; 9] = [1.0, -8.0, 28.0, -56.0, 70.0, -56.0, 28.0, -8.0, 1.0];

impl Dissipation {
    pub fn new(sigma: f64, h: f64) -> Self {
        Dissipation {
            sigma,
            coeff: -sigma / (256.0 * h),
        }
    }

    pub fn is_active(&self) -> bool {
        self.sigma != 0.0
    }

    pub fn add(&self, f: &[f64], out: &mut [f64]) {
        if !self.is_active() || f.len() < 9 {
            return;
        }
        for i in 4..f.len() - 4 {
            out[i] += self.coeff * dot(&KO8, &f[i - 4..i + 5]);
        }
    }
}
