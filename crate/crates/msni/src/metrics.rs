//! Parameter-recovery and continual-learning evaluation metrics.
//!
//! Parameter metrics compare estimates against true parameters (squared
//! error, and its running mean over the tasks seen so far). Classification
//! metrics are derived from an accuracy grid `R[i][j]`: the accuracy on task
//! `j` after training through task `i`, with row 0 holding the accuracies of
//! a randomly initialized model. Forward transfer averages `R[i-1][i] -
//! R[0][i]` (how much prior training helps an unseen task); backward transfer
//! averages `R[M][i] - R[i][i]` (how much later training erodes earlier
//! tasks, negative under forgetting).

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::loss::SampleBatch;

/// Squared Euclidean error `||theta_hat - theta_ref||^2`.
pub fn mse_k(theta_hat: ArrayView1<'_, f64>, theta_ref: ArrayView1<'_, f64>) -> Result<f64> {
    if theta_hat.len() != theta_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: theta_ref.len(),
            found: theta_hat.len(),
            context: "mse_k",
        });
    }
    Ok(theta_hat
        .iter()
        .zip(theta_ref.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Mean of [`mse_k`] against the first `current_task` task parameters.
pub fn mmse(
    theta_hat: ArrayView1<'_, f64>,
    task_params: &[ndarray::Array1<f64>],
    current_task: usize,
) -> Result<f64> {
    if current_task == 0 || current_task > task_params.len() {
        return Err(Error::InvalidInput(format!(
            "current task {current_task} outside 1..={}",
            task_params.len()
        )));
    }
    let mut total = 0.0;
    for theta in &task_params[..current_task] {
        total += mse_k(theta_hat, theta.view())?;
    }
    Ok(total / current_task as f64)
}

/// Accuracy grid over `M` tasks: `(M+1) x M`, row 0 = random initialization,
/// row `i` = accuracies after training through task `i`. All entries in `[0,1]`.
#[derive(Debug, Clone)]
pub struct AccuracyMatrix {
    r: Array2<f64>,
}

impl AccuracyMatrix {
    pub fn new(r: Array2<f64>) -> Result<Self> {
        let m = r.ncols();
        if m == 0 || r.nrows() != m + 1 {
            return Err(Error::InvalidInput(format!(
                "accuracy matrix must be (M+1) x M, got {} x {}",
                r.nrows(),
                m
            )));
        }
        if r.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput("accuracies must lie in [0,1]".into()));
        }
        Ok(Self { r })
    }

    /// Number of tasks `M`.
    pub fn num_tasks(&self) -> usize {
        self.r.ncols()
    }

    /// `R[i][j]` with `i` in `0..=M` (0 = random init) and `j` in `1..=M`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.r[[i, j - 1]]
    }

    pub fn grid(&self) -> &Array2<f64> {
        &self.r
    }

    fn require_multiple_tasks(&self, what: &str) -> Result<()> {
        if self.num_tasks() < 2 {
            return Err(Error::InvalidInput(format!(
                "{what} needs at least two tasks"
            )));
        }
        Ok(())
    }
}

/// Mean accuracy over tasks `1..=i` after training through task `i`.
pub fn average_accuracy(r: &AccuracyMatrix, i: usize) -> Result<f64> {
    if i == 0 || i > r.num_tasks() {
        return Err(Error::InvalidInput(format!(
            "task index {i} outside 1..={}",
            r.num_tasks()
        )));
    }
    Ok((1..=i).map(|j| r.r(i, j)).sum::<f64>() / i as f64)
}

/// Mean of the average accuracies across the whole training sequence.
pub fn aia(r: &AccuracyMatrix) -> Result<f64> {
    let m = r.num_tasks();
    let mut total = 0.0;
    for i in 1..=m {
        total += average_accuracy(r, i)?;
    }
    Ok(total / m as f64)
}

/// Forward transfer: `mean_{i=2..M} (R[i-1][i] - R[0][i])`.
pub fn fwt(r: &AccuracyMatrix) -> Result<f64> {
    r.require_multiple_tasks("forward transfer")?;
    let m = r.num_tasks();
    let total: f64 = (2..=m).map(|i| r.r(i - 1, i) - r.r(0, i)).sum();
    Ok(total / (m - 1) as f64)
}

/// Backward transfer: `mean_{i=1..M-1} (R[M][i] - R[i][i])`.
pub fn bwt(r: &AccuracyMatrix) -> Result<f64> {
    r.require_multiple_tasks("backward transfer")?;
    let m = r.num_tasks();
    let total: f64 = (1..m).map(|i| r.r(m, i) - r.r(i, i)).sum();
    Ok(total / (m - 1) as f64)
}

/// Fraction of samples whose sign prediction `x'theta >= 0` matches `y = 1`.
/// The boundary `x'theta = 0` deterministically predicts class 1.
pub fn classify_accuracy(theta: ArrayView1<'_, f64>, batch: &SampleBatch) -> Result<f64> {
    if theta.len() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            found: theta.len(),
            context: "classifier parameter",
        });
    }
    let z = batch.features().dot(&theta);
    let hits = z
        .iter()
        .zip(batch.responses().iter())
        .filter(|(&zi, &yi)| (zi >= 0.0) == (yi == 1.0))
        .count();
    Ok(hits as f64 / batch.num_samples() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn constant_matrix(m: usize, c: f64) -> AccuracyMatrix {
        AccuracyMatrix::new(Array2::from_elem((m + 1, m), c)).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = array![1.0, 2.0];
        assert_eq!(mse_k(a.view(), a.view()).unwrap(), 0.0);
        let b = array![4.0, 6.0];
        assert_eq!(mse_k(b.view(), a.view()).unwrap(), 25.0);
    }

    #[test]
    fn mmse_examples() {
        let tasks = vec![array![0.0, 0.0], array![2.0, 0.0]];
        let hat = array![1.0, 0.0];
        // i = 1: distance to task 1 only
        assert_eq!(mmse(hat.view(), &tasks, 1).unwrap(), 1.0);
        // i = 2: mean of 1 and 1
        assert_eq!(mmse(hat.view(), &tasks, 2).unwrap(), 1.0);
        let tasks2 = vec![array![1.0], array![3f64.sqrt()]];
        let hat2 = array![0.0];
        assert!((mmse(hat2.view(), &tasks2, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!(mmse(hat.view(), &tasks, 3).is_err());
    }

    #[test]
    fn average_accuracy_rows() {
        let c = constant_matrix(4, 0.8);
        assert_eq!(average_accuracy(&c, 1).unwrap(), 0.8);
        assert_eq!(average_accuracy(&c, 4).unwrap(), 0.8);

        let mut grid = Array2::from_elem((4, 3), 0.5);
        grid[[3, 0]] = 0.9;
        grid[[3, 1]] = 0.8;
        grid[[3, 2]] = 0.7;
        let m = AccuracyMatrix::new(grid).unwrap();
        assert!((average_accuracy(&m, 3).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn aia_of_constant_is_constant() {
        let c = constant_matrix(5, 0.6);
        assert!((aia(&c).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(fwt(&c).unwrap(), 0.0);
        assert_eq!(bwt(&c).unwrap(), 0.0);
    }

    #[test]
    fn aia_two_task_example() {
        // AA = (1.0, 0.5) -> AIA = 0.75
        let grid = array![[0.0, 0.0], [1.0, 0.0], [0.2, 0.8]];
        let m = AccuracyMatrix::new(grid).unwrap();
        assert!((aia(&m).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fwt_hand_example() {
        // gaps (R[1][2]-R[0][2], R[2][3]-R[0][3]) = (0.2, -0.1) -> 0.05
        let mut grid = Array2::from_elem((4, 3), 0.5);
        grid[[0, 1]] = 0.5;
        grid[[1, 1]] = 0.7; // R[1][2] - R[0][2] = 0.2
        grid[[0, 2]] = 0.6;
        grid[[2, 2]] = 0.5; // R[2][3] - R[0][3] = -0.1
        let m = AccuracyMatrix::new(grid).unwrap();
        assert!((fwt(&m).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn bwt_hand_examples() {
        // uniform drop of 0.05
        let mut grid = Array2::from_elem((4, 3), 0.8);
        grid[[3, 0]] = 0.75;
        grid[[3, 1]] = 0.75;
        let m = AccuracyMatrix::new(grid).unwrap();
        assert!((bwt(&m).unwrap() + 0.05).abs() < 1e-12);

        // drops (-0.1, 0.0) -> -0.05
        let mut grid = Array2::from_elem((4, 3), 0.8);
        grid[[3, 0]] = 0.7;
        let m = AccuracyMatrix::new(grid).unwrap();
        assert!((bwt(&m).unwrap() + 0.05).abs() < 1e-12);
    }

    #[test]
    fn transfer_metrics_need_two_tasks() {
        let single = constant_matrix(1, 0.9);
        assert!(fwt(&single).is_err());
        assert!(bwt(&single).is_err());
        assert!((aia(&single).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn entries_outside_unit_interval_rejected() {
        let grid = Array2::from_elem((3, 2), 1.2);
        assert!(AccuracyMatrix::new(grid).is_err());
    }

    #[test]
    fn task_reordering_changes_transfer() {
        // regression guard on index order: swapping two task columns and the
        // corresponding rows changes FWT/BWT as the definitions dictate
        let grid = array![
            [0.5, 0.4, 0.3],
            [0.9, 0.5, 0.4],
            [0.8, 0.9, 0.5],
            [0.7, 0.8, 0.9],
        ];
        let m = AccuracyMatrix::new(grid.clone()).unwrap();
        let swapped = {
            let mut g = grid;
            g.swap([1, 0], [1, 1]);
            g.swap([2, 0], [2, 1]);
            AccuracyMatrix::new(g).unwrap()
        };
        assert_ne!(bwt(&m).unwrap(), bwt(&swapped).unwrap());
    }

    #[test]
    fn classifier_accuracy_cases() {
        use ndarray::Array2;
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, -1.0, -2.0]).unwrap();
        let y = array![1.0, 1.0, 0.0, 0.0];
        let b = crate::loss::SampleBatch::new(x, y, 1).unwrap();
        // perfectly separating direction
        assert_eq!(classify_accuracy(array![1.0].view(), &b).unwrap(), 1.0);
        // zero parameter predicts everything as class 1
        assert_eq!(classify_accuracy(array![0.0].view(), &b).unwrap(), 0.5);
        // anti-separating direction
        assert_eq!(classify_accuracy(array![-1.0].view(), &b).unwrap(), 0.0);
    }

    #[test]
    fn random_direction_near_half_on_symmetric_data() {
        use crate::rng::{substream, StreamPurpose};
        use crate::sim::gen_covariates;
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = substream(3, StreamPurpose::TestData, 0, 1);
        let n = 40_000;
        let x = gen_covariates(n, 3, &mut rng);
        // balanced labels independent of x
        let y = Array1::from_shape_fn(n, |i| (i % 2) as f64);
        let b = crate::loss::SampleBatch::new(x, y, 1).unwrap();
        let theta = Array1::from_shape_fn(3, |_| rng.sample::<f64, _>(StandardNormal));
        let acc = classify_accuracy(theta.view(), &b).unwrap();
        assert!((acc - 0.5).abs() < 0.02, "accuracy {acc}");
    }
}
