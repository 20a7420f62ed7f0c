//! Masked cross-entropy, temperature-scaled distillation and their
//! finite-difference gradient check.

use std::error::Error;

use forge::loss::{finite_diff_check, gradient_suite, joint_loss, kl_distill, masked_ce, LogitMatrix};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let student = LogitMatrix::from_rows(&[vec![2.0, 0.5, -1.0], vec![0.1, 0.2, 0.3], vec![-3.0, 4.0, 0.0]])?;
    let teacher = LogitMatrix::from_rows(&[vec![1.5, 1.0, -2.0], vec![0.0, 0.0, 1.0], vec![-1.0, 3.0, 1.0]])?;
    let targets = [0, 2, 1];
    let mask = [true, true, false];

    let ce = masked_ce(&student, &targets, &mask)?;
    let kl = kl_distill(&teacher, &student, 2.0, &mask)?;
    let joint = joint_loss(&ce, &kl, 0.5, None, 0.0)?;
    println!("ce {:.6}  kl(T=2) {:.6}  joint {:.6}", ce.loss, kl.loss, joint.total);

    let err = finite_diff_check(|x| kl_distill(&teacher, x, 2.0, &mask), &student, 1e-6)?;
    println!("kl gradient max relative error {err:.2e}");

    let report = gradient_suite(20, 0, 1e-6)?;
    println!("suite: ce {:.2e}, kl {:?}", report.ce_max_error, report.kl_max_error);
    assert!(report.worst() < 1e-5);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
