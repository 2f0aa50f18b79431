use std::fs;
use std::process::Command;

use ftrans_core::corpus::{default_root, extract_test_module};
use ftrans_core::fortran::{scan_tree, ScanOptions};
use ftrans_core::transpile::{fortran_to_python, funit_to_pytest};

/// Transpile every unit of an entry into its own module, then run the
/// transpiled funit tests with pytest.
fn transpile_and_run(entry: &str) {
    let dir = default_root().join(entry);
    let units = scan_tree(&dir.join("src.f90"), &ScanOptions::default()).unwrap();
    let pf = fs::read_to_string(dir.join("tests.pf")).unwrap();
    let work = tempfile::tempdir().unwrap();
    let names: Vec<&str> = units.iter().map(|u| u.name.as_str()).collect();
    for unit in &units {
        let mut src = String::new();
        for dep in &unit.references {
            src.push_str(&format!("from {dep} import *\n"));
        }
        src.push_str(&fortran_to_python(&unit.text).unwrap());
        fs::write(work.path().join(format!("{}.py", unit.name)), src).unwrap();
        let module = extract_test_module(&pf, &unit.name).unwrap();
        let tests = format!("from {} import *\n{}", unit.name, funit_to_pytest(&module).unwrap());
        fs::write(work.path().join(format!("test_{}.py", unit.name)), tests).unwrap();
    }
    let out = Command::new("python3")
        .args(["-m", "pytest", "-q", "-p", "no:cacheprovider"])
        .current_dir(work.path())
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(" passed"), "{stdout}");
    assert!(out.status.success(), "{names:?}\n{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn hybrid_module_transpiles_and_passes_its_tests() {
    transpile_and_run("hybrid");
}

#[test]
fn photosynthesis_module_transpiles_and_passes_its_tests() {
    transpile_and_run("photosynthesis");
}
