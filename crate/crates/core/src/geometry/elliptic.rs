//! Carlson symmetric elliptic integrals (duplication algorithm).

use crate::scalar::Real;

fn max3<T: Real>(a: T, b: T, c: T) -> T {
    a.max(b).max(c)
}

/// `R_F(x, y, z)`; at most one argument may be zero.
pub fn carlson_rf<T: Real>(x: T, y: T, z: T) -> T {
    let (mut x, mut y, mut z) = (x, y, z);
    let tol = T::of(1e-3);
    let third = T::one() / T::of(3.0);
    let quarter = T::of(0.25);
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        x = quarter * (x + lambda);
        y = quarter * (y + lambda);
        z = quarter * (z + lambda);
        let mean = third * (x + y + z);
        let (dx, dy, dz) = ((mean - x) / mean, (mean - y) / mean, (mean - z) / mean);
        if max3(dx.abs(), dy.abs(), dz.abs()) < tol {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            let c1 = T::one() / T::of(24.0);
            let c2 = T::of(0.1);
            let c3 = T::of(3.0) / T::of(44.0);
            let c4 = T::one() / T::of(14.0);
            return (T::one() + (c1 * e2 - c2 - c3 * e3) * e2 + c4 * e3) / mean.sqrt();
        }
    }
}

/// `R_D(x, y, z)`; `z > 0` and at most one of `x`, `y` zero.
pub fn carlson_rd<T: Real>(x: T, y: T, z: T) -> T {
    let (mut x, mut y, mut z) = (x, y, z);
    let tol = T::of(1e-3);
    let quarter = T::of(0.25);
    let (mut sum, mut fac) = (T::zero(), T::one());
    loop {
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lambda = sx * (sy + sz) + sy * sz;
        sum = sum + fac / (sz * (z + lambda));
        fac = fac * quarter;
        x = quarter * (x + lambda);
        y = quarter * (y + lambda);
        z = quarter * (z + lambda);
        let mean = T::of(0.2) * (x + y + T::of(3.0) * z);
        let (dx, dy, dz) = ((mean - x) / mean, (mean - y) / mean, (mean - z) / mean);
        if max3(dx.abs(), dy.abs(), dz.abs()) < tol {
            let c1 = T::of(3.0 / 14.0);
            let c2 = T::of(1.0 / 6.0);
            let c3 = T::of(9.0 / 22.0);
            let c4 = T::of(3.0 / 26.0);
            let c5 = T::of(0.25) * c3;
            let c6 = T::of(1.5) * c4;
            let ea = dx * dy;
            let eb = dz * dz;
            let ec = ea - eb;
            let ed = ea - T::of(6.0) * eb;
            let ee = ed + ec + ec;
            let series =
                T::one() + ed * (-c1 + c5 * ed - c6 * dz * ee) + dz * (c2 * ee + dz * (-c3 * ec + dz * c4 * ea));
            return T::of(3.0) * sum + fac * series / (mean * mean.sqrt());
        }
    }
}

/// `R_G(x, y, z)` for positive arguments.
pub fn carlson_rg<T: Real>(x: T, y: T, z: T) -> T {
    // Symmetric in its arguments; put the largest last so R_D is well conditioned.
    let mut v = [x, y, z];
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite arguments"));
    let [x, y, z] = v;
    let half = T::of(0.5);
    half * (z * carlson_rf(x, y, z) - (x - z) * (y - z) * carlson_rd(x, y, z) / T::of(3.0) + (x * y / z).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn known_values() {
        // DLMF 19.20: R_F(0,1,2) = Gamma(1/4)^2 / (4 sqrt(2 pi)); R_F(x,x,x) = x^-1/2.
        assert_relative_eq!(carlson_rf(0.0, 1.0, 2.0), 1.3110287771460599, max_relative = 1e-14);
        assert_relative_eq!(carlson_rf(4.0f64, 4.0, 4.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(carlson_rd(2.0f64, 2.0, 2.0), 2f64.powf(-1.5), max_relative = 1e-14);
        // Complete elliptic integral K(m=0.5) = R_F(0, 0.5, 1).
        assert_relative_eq!(carlson_rf(0.0, 0.5, 1.0), 1.8540746773013719, max_relative = 1e-14);
        assert_relative_eq!(carlson_rg(1.0f64, 1.0, 1.0), 1.0, max_relative = 1e-15);
    }
}
