use crate::linalg::{CMat, CVec};

/// Orthogonal projector `I - Q Q^H` onto the null space of the blocked dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct NullSpaceProjector {
    basis: CMat,
}

impl NullSpaceProjector {
    /// `blocked` holds one steering vector per blocked grid sample.
    ///
    /// The basis is the smallest set of leading left singular vectors whose discarded tail obeys
    /// `‖P_N A_blk‖_F <= rel_tol ‖A_blk‖_F`.
    pub fn new(blocked: &CMat, rel_tol: f64) -> Self {
        let m = blocked.nrows();
        if blocked.ncols() == 0 {
            return Self::identity(m);
        }
        let svd = blocked.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let energy: Vec<f64> = order.iter().map(|&k| svd.singular_values[k].powi(2)).collect();
        // Tail energies summed from the small end; subtracting from the total would cancel.
        let mut tails = vec![0.0; energy.len() + 1];
        for k in (0..energy.len()).rev() {
            tails[k] = tails[k + 1] + energy[k];
        }
        let budget = rel_tol * rel_tol * tails[0];
        let rank = (0..=energy.len()).find(|&r| tails[r] <= budget).unwrap_or(energy.len());
        let cols: Vec<CVec> = order[..rank].iter().map(|&k| u.column(k).into_owned()).collect();
        if cols.is_empty() {
            return Self::identity(m);
        }
        Self { basis: CMat::from_columns(&cols) }
    }

    pub fn identity(elements: usize) -> Self {
        Self { basis: CMat::zeros(elements, 0) }
    }

    /// Dimension of the removed subspace.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn elements(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn apply(&self, w: &CVec) -> CVec {
        if self.rank() == 0 {
            return w.clone();
        }
        // A basis spanning the whole space leaves only round-off, which would read as full leakage.
        if self.rank() == self.elements() {
            return CVec::zeros(w.len());
        }
        let coeff = self.basis.ad_mul(w);
        w - &self.basis * coeff
    }

    pub fn matrix(&self) -> CMat {
        let m = self.elements();
        CMat::identity(m, m) - &self.basis * self.basis.adjoint()
    }

    /// Complex multiplies of one [`NullSpaceProjector::apply`].
    pub fn apply_cost(&self) -> u64 {
        2 * (self.elements() * self.rank()) as u64
    }
}
