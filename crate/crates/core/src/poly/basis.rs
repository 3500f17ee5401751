use std::collections::HashMap;

use super::Exponent;
use crate::error::{Error, Result};

/// All monomials of degree at most `degree`, in graded lex order.
///
/// When built over a variable subset the exponents still live in the
/// ambient dimension, with zeros outside the subset.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    dim: usize,
    degree: u32,
    variables: Vec<usize>,
    monomials: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

impl MonomialBasis {
    /// Basis of `ℝ[x_1..x_n]_d`.
    pub fn new(dim: usize, degree: u32) -> Self {
        let vars: Vec<usize> = (0..dim).collect();
        Self::build(dim, degree, vars)
    }

    /// Basis in the variables `variables` (strictly increasing) only.
    pub fn over_variables(dim: usize, variables: &[usize], degree: u32) -> Result<Self> {
        check_indices(variables, dim)?;
        Ok(Self::build(dim, degree, variables.to_vec()))
    }

    fn build(dim: usize, degree: u32, variables: Vec<usize>) -> Self {
        let mut monomials = Vec::new();
        let mut scratch = vec![0u32; variables.len()];
        for d in 0..=degree {
            compositions(&mut scratch, 0, d, &mut |local| {
                let mut e = vec![0u32; dim];
                for (slot, &v) in variables.iter().enumerate() {
                    e[v] = local[slot];
                }
                monomials.push(Exponent::new(e));
            });
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        MonomialBasis {
            dim,
            degree,
            variables,
            monomials,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Exponent] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &Exponent {
        &self.monomials[i]
    }

    pub fn position(&self, e: &Exponent) -> Option<usize> {
        self.index.get(e).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Exponent> {
        self.monomials.iter()
    }
}

impl<'a> IntoIterator for &'a MonomialBasis {
    type Item = &'a Exponent;
    type IntoIter = std::slice::Iter<'a, Exponent>;

    fn into_iter(self) -> Self::IntoIter {
        self.monomials.iter()
    }
}

/// `binomial(n, k)` in `u64`, exact for the sizes used here.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of monomials in `n` variables of degree at most `d`.
pub fn basis_size(n: usize, d: u32) -> usize {
    binomial(n as u64 + d as u64, d as u64) as usize
}

// Visits all exponent vectors of `slots.len()` entries summing to `total`,
// in ascending lexicographic order.
fn compositions(slots: &mut [u32], pos: usize, total: u32, visit: &mut dyn FnMut(&[u32])) {
    let n = slots.len();
    if n == 0 {
        if total == 0 {
            visit(slots);
        }
        return;
    }
    if pos == n - 1 {
        slots[pos] = total;
        visit(slots);
        return;
    }
    for a in 0..=total {
        slots[pos] = a;
        compositions(slots, pos + 1, total - a, visit);
    }
    slots[pos] = 0;
}

pub(crate) fn check_indices(indices: &[usize], dim: usize) -> Result<()> {
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedIndices);
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
        return Err(Error::IndexOutOfRange { index: bad, dim });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_variables_degree_two() {
        let b = MonomialBasis::new(2, 2);
        let got: Vec<Vec<u32>> = b.iter().map(|e| e.as_slice().to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![0, 2],
                vec![1, 1],
                vec![2, 0]
            ]
        );
    }

    #[test]
    fn constant_only() {
        let b = MonomialBasis::new(1, 0);
        assert_eq!(b.len(), 1);
        assert!(b.get(0).is_zero());
    }

    #[test]
    fn sizes_match_binomial() {
        assert_eq!(MonomialBasis::new(5, 4).len(), 126);
        assert_eq!(basis_size(5, 4), 126);
        assert_eq!(basis_size(5, 8), 1287);
        assert_eq!(basis_size(2, 4), 15);
        for n in 1..5 {
            for d in 0..6 {
                assert_eq!(MonomialBasis::new(n, d).len(), basis_size(n, d));
            }
        }
    }

    #[test]
    fn sorted_unique_and_downward_closed() {
        let b = MonomialBasis::new(3, 4);
        assert!(b.monomials().windows(2).all(|w| w[0] < w[1]));
        for e in b.iter() {
            for i in e.support().collect::<Vec<_>>() {
                let mut lower = e.as_slice().to_vec();
                lower[i] -= 1;
                assert!(b.position(&Exponent::new(lower)).is_some());
            }
        }
    }

    #[test]
    fn subset_basis_lives_in_ambient_dimension() {
        let b = MonomialBasis::over_variables(5, &[0, 1], 2).unwrap();
        assert_eq!(b.len(), 6);
        assert!(b.iter().all(|e| e.dim() == 5 && e.as_slice()[2..].iter().all(|&a| a == 0)));
        assert!(MonomialBasis::over_variables(5, &[1, 0], 2).is_err());
        assert!(MonomialBasis::over_variables(5, &[1, 7], 2).is_err());
    }
}
