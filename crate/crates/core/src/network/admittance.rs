//! Bus admittance matrix assembly.

use super::Network;
use nalgebra::DMatrix;

/// Real and imaginary parts of the bus admittance matrix Y = G + jB,
/// indexed by bus position.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }
}

/// Assembles the π-model bus admittance matrix including taps, phase
/// shifts, line charging, and fixed bus shunts.
///
/// For a branch with series admittance y = g + jb, total charging
/// b_c, tap ratio τ and shift σ (complex ratio τ·e^{jσ} at the from end):
///
/// ```text
/// Y_ff += (y + j b_c/2) / τ²      Y_ft += -y / (τ e^{-jσ})
/// Y_tt +=  y + j b_c/2            Y_tf += -y / (τ e^{+jσ})
/// ```
pub fn build_admittance(net: &Network) -> AdmittanceMatrix {
    let n = net.n_buses();
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);

    for (k, br) in net.branches.iter().enumerate() {
        let (f, t) = net.branch_endpoints(k);
        let (gs, bs) = br.series_gb();
        let bc2 = br.b_charge / 2.0;
        let tau = br.tap;
        let (cs, sn) = (br.shift.cos(), br.shift.sin());

        g[(f, f)] += gs / (tau * tau);
        b[(f, f)] += (bs + bc2) / (tau * tau);
        g[(t, t)] += gs;
        b[(t, t)] += bs + bc2;

        // -y / (τ e^{-jσ}) = -(g+jb)(cosσ + j sinσ)/τ
        g[(f, t)] += -(gs * cs - bs * sn) / tau;
        b[(f, t)] += -(bs * cs + gs * sn) / tau;
        // -y / (τ e^{+jσ}) = -(g+jb)(cosσ - j sinσ)/τ
        g[(t, f)] += -(gs * cs + bs * sn) / tau;
        b[(t, f)] += -(bs * cs - gs * sn) / tau;
    }

    for (i, bus) in net.buses.iter().enumerate() {
        g[(i, i)] += bus.shunt_g;
        b[(i, i)] += bus.shunt_b;
    }

    AdmittanceMatrix { g, b }
}
