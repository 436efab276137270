//! Two-source partial information decomposition with the Williams-Beer
//! `I_min` redundancy. All quantities are in bits.

use num_traits::Float;

use crate::error::PidError;

/// Joint distribution `p(z1, z2, x)` over finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable<T> {
    dims: [usize; 3],
    p: Vec<T>,
}

/// Which sources are treated as one variable in `mutual_information`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sources {
    First,
    Second,
    Both,
}

impl<T: Float> JointTable<T> {
    /// `p` is indexed `[(z1 * n2 + z2) * nx + x]`.
    pub fn new(dims: [usize; 3], p: Vec<T>) -> Result<Self, PidError> {
        assert_eq!(dims.iter().product::<usize>(), p.len(), "table shape");
        if p.iter().any(|v| *v < T::zero() || v.is_nan()) {
            return Err(PidError::Negative);
        }
        let sum = p.iter().fold(T::zero(), |a, b| a + *b);
        if (sum - T::one()).abs() > T::from(1e-9).unwrap() {
            return Err(PidError::Unnormalized(sum.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(JointTable { dims, p })
    }

    /// Builds `p(x) p(z1|x) p(z2|x)` from conditionals of binary sources.
    pub fn conditionally_independent(px: &[T], z1_given_x: &[T], z2_given_x: &[T]) -> Result<Self, PidError> {
        let nx = px.len();
        let mut p = vec![T::zero(); 4 * nx];
        for x in 0..nx {
            for z1 in 0..2 {
                for z2 in 0..2 {
                    let a = if z1 == 1 { z1_given_x[x] } else { T::one() - z1_given_x[x] };
                    let b = if z2 == 1 { z2_given_x[x] } else { T::one() - z2_given_x[x] };
                    p[(z1 * 2 + z2) * nx + x] = px[x] * a * b;
                }
            }
        }
        JointTable::new([2, 2, nx], p)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, z1: usize, z2: usize, x: usize) -> T {
        let [_, n2, nx] = self.dims;
        self.p[(z1 * n2 + z2) * nx + x]
    }

    /// `p(s, x)` where `s` indexes the chosen source grouping.
    fn grouped(&self, which: Sources) -> (usize, Vec<T>) {
        let [n1, n2, nx] = self.dims;
        let ns = match which {
            Sources::First => n1,
            Sources::Second => n2,
            Sources::Both => n1 * n2,
        };
        let mut q = vec![T::zero(); ns * nx];
        for z1 in 0..n1 {
            for z2 in 0..n2 {
                let s = match which {
                    Sources::First => z1,
                    Sources::Second => z2,
                    Sources::Both => z1 * n2 + z2,
                };
                for x in 0..nx {
                    q[s * nx + x] = q[s * nx + x] + self.get(z1, z2, x);
                }
            }
        }
        (ns, q)
    }

    fn px(&self) -> Vec<T> {
        let (ns, q) = self.grouped(Sources::Both);
        let nx = self.dims[2];
        (0..nx).map(|x| (0..ns).fold(T::zero(), |a, s| a + q[s * nx + x])).collect()
    }

    /// `I(S; X)` for the chosen grouping of sources.
    pub fn mutual_information(&self, which: Sources) -> T {
        let nx = self.dims[2];
        let (ns, q) = self.grouped(which);
        let px = self.px();
        let mut mi = T::zero();
        for s in 0..ns {
            let ps = (0..nx).fold(T::zero(), |a, x| a + q[s * nx + x]);
            for x in 0..nx {
                let j = q[s * nx + x];
                if j > T::zero() {
                    mi = mi + j * (j / (ps * px[x])).log2();
                }
            }
        }
        mi
    }

    /// `I_spec(X = x; Z)` for one source, per target state.
    fn specific_information(&self, which: Sources) -> Vec<T> {
        let nx = self.dims[2];
        let (ns, q) = self.grouped(which);
        let px = self.px();
        let ps: Vec<T> = (0..ns).map(|s| (0..nx).fold(T::zero(), |a, x| a + q[s * nx + x])).collect();
        (0..nx)
            .map(|x| {
                if px[x] == T::zero() {
                    return T::zero();
                }
                (0..ns).fold(T::zero(), |acc, s| {
                    let j = q[s * nx + x];
                    if j > T::zero() {
                        // p(s|x) log2(p(x|s) / p(x))
                        acc + (j / px[x]) * (j / (ps[s] * px[x])).log2()
                    } else {
                        acc
                    }
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidResult<T> {
    pub mutual: T,
    pub redundancy: T,
    pub unique1: T,
    pub unique2: T,
    pub synergy: T,
}

pub fn mutual_information<T: Float>(joint: &JointTable<T>, which: Sources) -> T {
    joint.mutual_information(which)
}

/// Redundant, unique and synergistic information the two sources carry about X.
pub fn pid_decompose<T: Float>(joint: &JointTable<T>) -> PidResult<T> {
    let px = joint.px();
    let s1 = joint.specific_information(Sources::First);
    let s2 = joint.specific_information(Sources::Second);
    let redundancy = px.iter().zip(s1.iter().zip(&s2)).fold(T::zero(), |a, (p, (i1, i2))| a + *p * i1.min(*i2));
    let i1 = joint.mutual_information(Sources::First);
    let i2 = joint.mutual_information(Sources::Second);
    let mutual = joint.mutual_information(Sources::Both);
    let (unique1, unique2) = (i1 - redundancy, i2 - redundancy);
    PidResult { mutual, redundancy, unique1, unique2, synergy: mutual - redundancy - unique1 - unique2 }
}

/// Rejects decompositions over anything but two sources.
pub fn check_sources(n: usize) -> Result<(), PidError> {
    if n == 2 {
        Ok(())
    } else {
        Err(PidError::Sources(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(f: impl Fn(usize, usize, usize) -> f64) -> JointTable<f64> {
        let mut p = Vec::new();
        for z1 in 0..2 {
            for z2 in 0..2 {
                for x in 0..2 {
                    p.push(f(z1, z2, x));
                }
            }
        }
        JointTable::new([2, 2, 2], p).unwrap()
    }

    #[test]
    fn xor_is_pure_synergy() {
        let j = table(|a, b, x| if a ^ b == x { 0.25 } else { 0.0 });
        assert_eq!(j.mutual_information(Sources::Both), 1.0);
        assert_eq!(j.mutual_information(Sources::First), 0.0);
        let r = pid_decompose(&j);
        assert_eq!((r.redundancy, r.unique1, r.unique2, r.synergy), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn copies_are_redundant() {
        let j = table(|a, b, x| if a == x && b == x { 0.5 } else { 0.0 });
        let r = pid_decompose(&j);
        assert_eq!((r.redundancy, r.unique1, r.unique2, r.synergy), (1.0, 0.0, 0.0, 0.0));
        let j = table(|a, _, x| if a == x { 0.25 } else { 0.0 });
        let r = pid_decompose(&j);
        assert_eq!((r.redundancy, r.unique1, r.unique2, r.synergy), (0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn independence_and_validation() {
        let j = table(|_, _, _| 0.125);
        assert_eq!(mutual_information(&j, Sources::Both), 0.0);
        assert!(matches!(JointTable::new([1, 1, 2], vec![0.5, 0.6]), Err(PidError::Unnormalized(_))));
        assert_eq!(JointTable::new([1, 1, 2], vec![1.5, -0.5]), Err(PidError::Negative));
        assert_eq!(check_sources(3), Err(PidError::Sources(3)));
    }

    #[test]
    fn single_precision_agrees() {
        let j = JointTable::<f32>::new([2, 2, 2], vec![0.25, 0.0, 0.0, 0.25, 0.0, 0.25, 0.25, 0.0]).unwrap();
        let r = pid_decompose(&j);
        assert!((r.synergy - 1.0).abs() < 1e-6);
    }

    fn arb_table() -> impl Strategy<Value = JointTable<f64>> {
        (1usize..4, 1usize..4, 1usize..5).prop_flat_map(|(a, b, c)| {
            prop::collection::vec(0.0f64..1.0, a * b * c).prop_filter_map("non-zero", move |w| {
                let s: f64 = w.iter().sum();
                (s > 1e-6).then(|| JointTable::new([a, b, c], w.iter().map(|v| v / s).collect()).unwrap())
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn decomposition_identity_and_bounds(j in arb_table()) {
            let r = pid_decompose(&j);
            prop_assert!((r.redundancy + r.unique1 + r.unique2 + r.synergy - r.mutual).abs() < 1e-9);
            for v in [r.redundancy, r.unique1, r.unique2, r.synergy] {
                prop_assert!(v >= -1e-9, "{:?}", r);
            }
        }

        #[test]
        fn swapping_sources(j in arb_table()) {
            let [a, b, c] = j.dims();
            let mut p = Vec::new();
            for z2 in 0..b { for z1 in 0..a { for x in 0..c { p.push(j.get(z1, z2, x)); } } }
            let s = JointTable::new([b, a, c], p).unwrap();
            let (r, q) = (pid_decompose(&j), pid_decompose(&s));
            prop_assert!((r.redundancy - q.redundancy).abs() < 1e-12);
            prop_assert!((r.synergy - q.synergy).abs() < 1e-9);
            prop_assert!((r.unique1 - q.unique2).abs() < 1e-12);
        }
    }
}
