use rand::Rng;

/// Binary tree over squared magnitudes.
///
/// Leaves hold `(x², sign(x))`; every internal node holds the sum of its two
/// children, so the root is `‖x‖²`. Stored as a flat heap array with the
/// leaves at `cap..cap + len`.
#[derive(Debug, Clone)]
pub struct SquareTree {
    cap: usize,
    len: usize,
    nodes: Vec<f64>,
    negative: Vec<bool>,
}

impl SquareTree {
    pub fn from_values(values: &[f64]) -> Self {
        let len = values.len();
        let cap = len.max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * cap];
        for (i, &v) in values.iter().enumerate() {
            nodes[cap + i] = v * v;
        }
        for i in (1..cap).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self {
            cap,
            len,
            nodes,
            negative: values.iter().map(|v| v.is_sign_negative() && *v != 0.0).collect(),
        }
    }

    /// Tree over nonnegative weights (already squared), e.g. row norms.
    pub fn from_weights(weights: &[f64]) -> Self {
        let len = weights.len();
        let cap = len.max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * cap];
        nodes[cap..cap + len].copy_from_slice(weights);
        for i in (1..cap).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self {
            cap,
            len,
            nodes,
            negative: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn square(&self, i: usize) -> f64 {
        self.nodes[self.cap + i]
    }

    pub fn value(&self, i: usize) -> f64 {
        let mag = self.square(i).sqrt();
        if self.negative[i] {
            -mag
        } else {
            mag
        }
    }

    /// Leaf index drawn with probability `square(i) / total()` from a single
    /// uniform variate. Caller guarantees `total() > 0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>() * self.total();
        let mut node = 1;
        while node < self.cap {
            let left = self.nodes[2 * node];
            let right = self.nodes[2 * node + 1];
            // Rounding can push `u` past a subtree's mass; never step into an
            // empty subtree.
            if (u < left && left > 0.0) || right <= 0.0 {
                node *= 2;
            } else {
                u -= left;
                node = 2 * node + 1;
            }
        }
        node - self.cap
    }

    /// Checks that every internal node equals the sum of its children.
    pub fn audit(&self) -> bool {
        (1..self.cap).all(|i| self.nodes[i] == self.nodes[2 * i] + self.nodes[2 * i + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn signs_and_squares_round_trip() {
        let vals = [3.0, -4.0, 0.0, 0.5, -1e-3];
        let t = SquareTree::from_values(&vals);
        for (i, v) in vals.iter().enumerate() {
            assert_eq!(t.value(i), *v);
        }
        assert_eq!(t.total(), 9.0 + 16.0 + 0.25 + 1e-6);
        assert!(t.audit());
    }

    #[test]
    fn never_samples_zero_leaves() {
        let t = SquareTree::from_values(&[0.0, 0.0, 2.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(t.sample(&mut rng), 2);
        }
    }

    #[test]
    fn single_leaf() {
        let t = SquareTree::from_values(&[-2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(t.sample(&mut rng), 0);
        assert_eq!(t.total(), 4.0);
        assert_eq!(t.value(0), -2.0);
    }
}
