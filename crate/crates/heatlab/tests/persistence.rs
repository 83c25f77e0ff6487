//! Disk workflows across modules: a mesh written by one session must rebuild
//! the identical discrete problem in another, trajectories saved as text must
//! reload onto the rebuilt space, and the eigendecomposition disk cache must
//! reproduce semigroup applications bit for bit.

use heatlab::fem::{l2_project, FeFunction, FeSpace, Field};
use heatlab::mesh::{Point2, TriMesh};
use heatlab::parabolic::{read_state_trajectory, solve_semidiscrete, SourceKind, SourceTerm, TimeProfile};
use heatlab::quadrature::log_spaced;
use heatlab::spectral::SpectralDecomposition;
use nalgebra::DVector;
use std::path::PathBuf;
use std::sync::Arc;

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("heatlab-persistence").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn a_mesh_file_rebuilds_the_same_discrete_problem() {
    let dir = scratch_dir("mesh");
    let path = dir.join("lshape3.mesh");
    let mesh = TriMesh::structured_l_shape(8);
    mesh.write_file(&path).unwrap();

    let reread = TriMesh::read_file(&path).unwrap();
    assert_eq!(reread.num_triangles(), mesh.num_triangles());
    assert_eq!(reread.h(), mesh.h());

    let s1 = Arc::new(FeSpace::new(mesh, 1).unwrap());
    let s2 = Arc::new(FeSpace::new(reread, 1).unwrap());
    assert_eq!(s1.num_dofs(), s2.num_dofs());

    // identical stiffness action on an arbitrary deterministic vector
    let v = DVector::from_fn(s1.num_dofs(), |i, _| ((i * 37 + 5) % 11) as f64 - 5.0);
    let k1 = s1.stiffness().mul_vec(&v);
    let k2 = s2.stiffness().mul_vec(&v);
    assert_eq!(k1, k2, "stiffness differs after a mesh file round-trip");
}

#[test]
fn trajectories_reload_onto_a_rebuilt_space() {
    let dir = scratch_dir("trajectory");
    let mesh_path = dir.join("square.mesh");
    let traj_path = dir.join("heat.traj");

    let mesh = TriMesh::structured_square(8);
    mesh.write_file(&mesh_path).unwrap();
    let space = Arc::new(FeSpace::new(mesh, 1).unwrap());
    let dec = Arc::new(SpectralDecomposition::compute(&space, 1000).unwrap());

    let w = l2_project(&space, &Field(|p: Point2| p.x * (1.0 - p.x) * p.y)).unwrap();
    let source = SourceTerm {
        kind: SourceKind::Separable { profile: TimeProfile::Cosine { omega: 3.0 }, w },
        t_end: 1.0,
    };
    let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.2).collect();
    let sample = solve_semidiscrete(&dec, &source, &times).unwrap();
    std::fs::write(&traj_path, sample.to_text()).unwrap();

    // a fresh session: space rebuilt from the mesh file, trajectory reloaded
    let space2 = Arc::new(FeSpace::new(TriMesh::read_file(&mesh_path).unwrap(), 1).unwrap());
    let text = std::fs::read_to_string(&traj_path).unwrap();
    let (rt_times, rt_states) = read_state_trajectory(&space2, &text).unwrap();
    assert_eq!(rt_times, times);
    assert_eq!(rt_states.len(), sample.states.len());
    for (a, b) in sample.states.iter().zip(&rt_states) {
        let diff = (a.coeffs() - b.coeffs()).amax();
        assert!(diff == 0.0, "state drifted by {diff} through the text format");
    }

    // the reloaded states still satisfy the solution at the sample points
    let probe = Point2::new(0.375, 0.625);
    let sol_state = sample.states[3].eval(probe).unwrap();
    let rt_state = rt_states[3].eval(probe).unwrap();
    assert_eq!(sol_state, rt_state);
}

#[test]
fn the_spectral_disk_cache_reproduces_semigroup_applications() {
    let dir = scratch_dir("spectral");
    let mesh_path = dir.join("square.mesh");
    let cache_path = dir.join("dec.specdec");

    let mesh = TriMesh::structured_square(8);
    mesh.write_file(&mesh_path).unwrap();
    let space = Arc::new(FeSpace::new(mesh, 1).unwrap());
    let dec = SpectralDecomposition::compute(&space, 1000).unwrap();
    dec.write_cache(&cache_path).unwrap();

    let space2 = Arc::new(FeSpace::new(TriMesh::read_file(&mesh_path).unwrap(), 1).unwrap());
    let cached = SpectralDecomposition::read_cache(&space2, &cache_path).unwrap();
    assert_eq!(cached.eigenvalues(), dec.eigenvalues());

    let v = l2_project(&space, &Field(|p: Point2| (p.x * 7.0).sin() * p.y)).unwrap();
    let v2 = FeFunction::new(space2, v.coeffs().clone()).unwrap();
    for t in log_spaced(1e-4, 2.0, 7) {
        let a = dec.apply_semigroup(t, &v).unwrap();
        let b = cached.apply_semigroup(t, &v2).unwrap();
        assert_eq!(a.coeffs(), b.coeffs(), "cache mismatch at t = {t}");
    }
}
