//! Grids of independent points evaluated in parallel.

use std::io::Write;

use serde::Serialize;
use spinlock::output::sig17;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    /// Unit of the values as written, e.g. `gamma_g`.
    pub unit: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self { name: name.into(), unit: unit.into(), values }
    }
}

/// Scalar results on the product of the axes, first axis slowest. Each grid
/// point carries one value per column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub columns: Vec<String>,
    /// `values[point][column]`.
    pub values: Vec<Vec<f64>>,
}

impl SweepResult {
    pub fn new(axes: Vec<Axis>, columns: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, CliError> {
        let points: usize = axes.iter().map(|a| a.values.len()).product();
        if axes.is_empty() || values.len() != points {
            return Err(CliError::validation("sweep", format!("{} results for a grid of {points} points", values.len())));
        }
        if let Some(row) = values.iter().find(|r| r.len() != columns.len()) {
            return Err(CliError::validation("sweep", format!("row has {} values for {} columns", row.len(), columns.len())));
        }
        Ok(Self { axes, columns, values })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    /// Grid coordinates of a flat index.
    pub fn coordinates(&self, mut index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[k] = axis.values[index % n];
            index /= n;
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|r| r[c]).collect())
    }

    /// One row per point, axis values then result columns. Blocks of the
    /// first axis are separated by a blank line when there are two axes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).chain(self.columns.iter().map(|c| c.as_str())).collect();
        writeln!(w, "{}", header.join(","))?;
        let inner: usize = self.axes[1..].iter().map(|a| a.values.len()).product();
        for (i, row) in self.values.iter().enumerate() {
            if self.axes.len() > 1 && i > 0 && i % inner == 0 {
                writeln!(w)?;
            }
            let cells: Vec<String> = self.coordinates(i).into_iter().chain(row.iter().copied()).map(sig17).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Applies `f` to every item with `workers` threads. Items are split into
/// contiguous blocks and the results come back in input order.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let block = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(block)
            .map(|chunk| {
                let f = &f;
                s.spawn(move || chunk.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

/// Evaluates `f` on the product grid of `axes` (first axis slowest).
pub fn run_grid<F>(axes: Vec<Axis>, columns: &[&str], workers: usize, f: F) -> Result<SweepResult, CliError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, CliError> + Sync,
{
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let probe = SweepResult { axes, columns: columns.iter().map(|c| c.to_string()).collect(), values: Vec::new() };
    let points: Vec<Vec<f64>> = (0..total).map(|i| probe.coordinates(i)).collect();
    let values = par_map(&points, workers, |p| f(p)).into_iter().collect::<Result<Vec<_>, _>>()?;
    SweepResult::new(probe.axes, probe.columns, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order_for_any_worker_count() {
        let items: Vec<u64> = (0..103).collect();
        let serial = par_map(&items, 1, |x| x * x);
        for w in [2, 3, 4, 16, 500] {
            assert_eq!(par_map(&items, w, |x| x * x), serial);
        }
        assert!(par_map(&Vec::<u64>::new(), 4, |x| *x).is_empty());
    }

    #[test]
    fn grid_shape_and_layout() {
        let axes = vec![Axis::new("a", "1", vec![1.0, 2.0]), Axis::new("b", "1", vec![10.0, 20.0, 30.0])];
        let r = run_grid(axes, &["sum"], 3, |p| Ok(vec![p[0] + p[1]])).unwrap();
        assert_eq!(r.shape(), vec![2, 3]);
        assert_eq!(r.column("sum").unwrap(), vec![11.0, 21.0, 31.0, 12.0, 22.0, 32.0]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a,b,sum");
        assert_eq!(lines.len(), 1 + 6 + 1);
        assert_eq!(lines[4], "");
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let axes = vec![Axis::new("a", "1", vec![1.0, 2.0])];
        assert!(SweepResult::new(axes.clone(), vec!["v".into()], vec![vec![1.0]]).is_err());
        assert!(SweepResult::new(axes, vec!["v".into()], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn errors_propagate() {
        let axes = vec![Axis::new("a", "1", vec![1.0, 2.0])];
        assert!(run_grid(axes, &["v"], 2, |p| if p[0] > 1.5 { Err(CliError::validation("x", "y")) } else { Ok(vec![0.0]) }).is_err());
    }
}
