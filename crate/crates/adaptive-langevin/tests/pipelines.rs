//! End-to-end runs of the report pipelines against independent oracles.

use adaptive_langevin::config::{ExperimentConfig, Pipeline};
use adaptive_langevin::operator::{assemble, build_basis, csr_to_dense, BasisConfig};
use adaptive_langevin::potential::{double_well, extended_phase, Potential};
use adaptive_langevin::rates::eyring_kramers_rate;
use adaptive_langevin::report::{emit_convergence_table, run};

#[test]
fn spectra_rows_match_dense_eigenvalues() {
    let dir = std::env::temp_dir().join(format!("al-pipelines-{}", std::process::id()));
    let text = format!(
        "h = 0.2, 0.1\npipelines = spectra\nresolution.nx = 25\nresolution.nv = 6\nresolution.ny = 6\nout = {}\n",
        dir.display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    assert!(cfg.runs(Pipeline::Spectra));
    let summary = run(&cfg, false).unwrap();
    assert_eq!(summary.spectra.len(), 2);
    let v = Potential::tilted_quartic();
    let topo = double_well(&v).unwrap();
    let phase = extended_phase(&v, 1.0, 1.0).unwrap();
    for row in &summary.spectra {
        let basis = build_basis(&v, &BasisConfig::new(row.h).with_sizes(25, 6, 6)).unwrap();
        let p = csr_to_dense(&assemble(&phase, &basis).p);
        let mut eig: Vec<_> = p.complex_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| a.re.total_cmp(&b.re));
        // At this coarse Hermite truncation the kernel is lifted to O(1e-6).
        assert!((row.kernel - eig[0].re).abs() <= 1e-6 * eig[0].re.abs() + 1e-14, "{} vs {}", row.kernel, eig[0]);
        assert!(eig[0].re.abs() < 1e-2 * eig[1].re, "{:?}", eig[0]);
        assert!((row.lambda_num - eig[1].re).abs() < 1e-8 * eig[1].re.abs().max(1e-3), "{} vs {}", row.lambda_num, eig[1]);
        let ek = eyring_kramers_rate(&topo, 1.0, row.h).unwrap().lambda;
        assert!((row.ratio - row.lambda_num / ek).abs() < 1e-12);
        assert!(row.ratio.is_finite());
    }
    let table = emit_convergence_table(&summary.spectra).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(dir.join("convergence.csv")).unwrap(), table);
    std::fs::remove_dir_all(&dir).unwrap();
}
