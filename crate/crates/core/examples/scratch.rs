use nesskubo::bloch::{band_structure, conductivity_bloch_leading, conductivity_bloch_parts, PeriodicProblem};
use nesskubo::lattice::CellPotential;
use nesskubo::spectral::Beta;

fn main() {
    let cell = CellPotential::new(vec![2], vec![1.0, -1.0]).unwrap();
    let prob = PeriodicProblem::new(cell, vec![4096]).unwrap();
    let bands = band_structure(&prob).unwrap();

    // criterion 6: mu=1.8 inside upper band, beta=inf
    println!("criterion 6 (mu=1.8, beta=inf):");
    for lam in [0.2, 0.1, 0.05] {
        let parts = conductivity_bloch_parts(&bands, &prob, Beta::INFINITE, 1.8, lam).unwrap();
        let leading = conductivity_bloch_leading(&bands, &prob, Beta::INFINITE, 1.8, lam).unwrap();
        let c = (parts.total - leading).abs() / lam;
        println!("  lam={lam}: exact {:.8e} leading {:.8e} C={c:.6e} off={:.3e} bound={:.3e}", parts.total, leading, parts.off_diagonal, parts.off_diagonal_bound);
    }

    // criterion 8: mu=0 in gap
    println!("criterion 8 (mu=0 in gap, beta=inf):");
    for lam in [0.1, 0.05, 0.025] {
        let parts = conductivity_bloch_parts(&bands, &prob, Beta::INFINITE, 0.0, lam).unwrap();
        let leading = conductivity_bloch_leading(&bands, &prob, Beta::INFINITE, 0.0, lam).unwrap();
        println!("  lam={lam}: leading {:.3e} exact {:.6e} bound {:.6e} 10*bound {:.6e} ok={}", leading, parts.total, parts.off_diagonal_bound, 10.0*parts.off_diagonal_bound, parts.total <= 10.0*parts.off_diagonal_bound);
    }
}
