use super::QualityError;

/// Per-file source statistics feeding the maintainability index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FileStats {
    pub halstead_volume: f64,
    pub cyclomatic_complexity: f64,
    pub loc: u64,
}

/// Visual Studio maintainability index for one file, rescaled to 0..=100
/// and clipped at 0.
pub fn file_maintainability(stats: &FileStats) -> Result<f64, QualityError> {
    if !stats.halstead_volume.is_finite() || stats.halstead_volume <= 0.0 {
        return Err(QualityError::InvalidStats(format!("halstead volume {} must be positive", stats.halstead_volume)));
    }
    if stats.loc == 0 {
        return Err(QualityError::InvalidStats("loc must be at least 1".into()));
    }
    if stats.cyclomatic_complexity.is_nan() || stats.cyclomatic_complexity < 0.0 {
        return Err(QualityError::InvalidStats(format!(
            "cyclomatic complexity {} must be non-negative",
            stats.cyclomatic_complexity
        )));
    }
    let raw = 171.0
        - 5.2 * stats.halstead_volume.ln()
        - 0.23 * stats.cyclomatic_complexity
        - 16.2 * (stats.loc as f64).ln();
    Ok((raw * 100.0 / 171.0).clamp(0.0, 100.0))
}

/// LOC-weighted mean of per-file indices, in 0..=100.
pub fn maintainability_index(files: &[FileStats]) -> Result<f64, QualityError> {
    if files.is_empty() {
        return Err(QualityError::InvalidStats("no files".into()));
    }
    let mut weighted = 0.0;
    let mut total_loc = 0.0;
    for stats in files {
        let mi = file_maintainability(stats)?;
        weighted += mi * stats.loc as f64;
        total_loc += stats.loc as f64;
    }
    Ok(weighted / total_loc)
}
