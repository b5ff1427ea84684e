//! CSV ingestion for the stats subcommand. The canonical schema is
//! (condition, run, accuracy); `--column` selects a different accuracy
//! column so a harness results.csv can be re-analyzed directly.

use std::path::Path;

use signbench_core::stats::{one_way_anova, t_test_two_sample, RunGroup, TTestVariant, TestReport};

use crate::error::{BenchError, Result};

/// Groups rows by `condition` in first-seen order, taking values from
/// `column`. Rows with an empty cell in that column are skipped.
pub fn read_run_groups(path: &Path, column: &str) -> Result<Vec<RunGroup>> {
    let as_format_err =
        |detail: String| BenchError::Format { path: path.to_path_buf(), detail };
    let mut reader = csv::Reader::from_path(path).map_err(|e| as_format_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| as_format_err(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let cond_idx = find("condition")
        .ok_or_else(|| as_format_err(format!("no \"condition\" column in {:?}", headers)))?;
    let value_idx = find(column)
        .ok_or_else(|| as_format_err(format!("no \"{column}\" column in {:?}", headers)))?;

    let mut groups: Vec<RunGroup> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| as_format_err(e.to_string()))?;
        let condition = record.get(cond_idx).unwrap_or_default();
        let cell = record.get(value_idx).unwrap_or_default();
        if cell.is_empty() {
            continue;
        }
        let value: f64 = cell.parse().map_err(|_| {
            as_format_err(format!("row {}: \"{cell}\" is not a number", row_no + 2))
        })?;
        match groups.iter_mut().find(|g| g.name == condition) {
            Some(g) => g.accuracies.push(value),
            None => groups.push(RunGroup::new(condition, vec![value])),
        }
    }
    Ok(groups)
}

/// The comparison rule used throughout: ANOVA for three or more groups, a
/// pooled two-sample t-test for exactly two.
pub fn run_test(groups: &[RunGroup]) -> Result<TestReport> {
    match groups.len() {
        0 | 1 => Err(BenchError::Config(format!(
            "need at least two conditions to compare, found {}",
            groups.len()
        ))),
        2 => Ok(t_test_two_sample(&groups[0], &groups[1], TTestVariant::Pooled)?),
        _ => Ok(one_way_anova(groups)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use signbench_core::stats::TestKind;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn groups_form_in_first_seen_order() {
        let f = write_csv("condition,run,accuracy\nb,0,0.5\na,0,0.6\nb,1,0.55\na,1,0.61\n");
        let groups = read_run_groups(f.path(), "accuracy").unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].name, "b");
        assert_eq!(groups[0].accuracies, vec![0.5, 0.55]);
        assert_eq!(groups[1].name, "a");
    }

    #[test]
    fn alternate_column_and_empty_cells() {
        let f = write_csv(
            "condition,run,test_accuracy,validation_accuracy\n\
             a,0,0.9,\na,1,0.92,0.8\nb,0,0.7,0.6\n",
        );
        let groups = read_run_groups(f.path(), "validation_accuracy").unwrap();
        assert_eq!(groups[0].accuracies, vec![0.8]);
        assert_eq!(groups[1].accuracies, vec![0.6]);
    }

    #[test]
    fn missing_column_is_an_error() {
        let f = write_csv("condition,run,accuracy\na,0,0.5\n");
        assert!(read_run_groups(f.path(), "f1_score").is_err());
    }

    #[test]
    fn bad_number_names_the_row() {
        let f = write_csv("condition,run,accuracy\na,0,0.5\na,1,oops\n");
        let err = read_run_groups(f.path(), "accuracy").unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
    }

    #[test]
    fn test_choice_follows_group_count() {
        let two = vec![
            RunGroup::new("a", vec![0.1, 0.2]),
            RunGroup::new("b", vec![0.3, 0.4]),
        ];
        assert_eq!(run_test(&two).unwrap().kind, TestKind::TTest);
        let three = vec![
            RunGroup::new("a", vec![1.0, 2.0]),
            RunGroup::new("b", vec![3.0, 4.0]),
            RunGroup::new("c", vec![5.0, 6.0]),
        ];
        let report = run_test(&three).unwrap();
        assert_eq!(report.kind, TestKind::Anova);
        assert_eq!(report.statistic, 16.0);
        assert!(run_test(&three[..1]).is_err());
    }
}
