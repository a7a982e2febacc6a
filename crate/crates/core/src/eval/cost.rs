//! Salary-based human cost per instance and model-to-human cost ratios.

use serde::{Deserialize, Serialize};

use super::aggregate::round_half_up;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub working_days_per_month: u32,
    pub hours_per_day: u32,
    pub months: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            working_days_per_month: 21,
            hours_per_day: 8,
            months: 12,
        }
    }
}

impl CostModel {
    pub fn seconds_per_year(&self) -> u64 {
        u64::from(self.months) * u64::from(self.working_days_per_month) * u64::from(self.hours_per_day) * 3600
    }

    pub fn per_second_rate(&self, annual_salary: f64) -> f64 {
        annual_salary / self.seconds_per_year() as f64
    }

    /// Unrounded cost; linear in both arguments.
    pub fn cost_exact(&self, annual_salary: f64, seconds: f64) -> Result<f64, EvalError> {
        if !(annual_salary > 0.0 && annual_salary.is_finite()) {
            return Err(EvalError::NonPositiveInput("annual salary"));
        }
        if !(seconds > 0.0 && seconds.is_finite()) {
            return Err(EvalError::NonPositiveInput("seconds per instance"));
        }
        Ok(self.per_second_rate(annual_salary) * seconds)
    }

    /// Rounded half-up to cents.
    pub fn cost_per_instance(&self, annual_salary: f64, seconds: f64) -> Result<f64, EvalError> {
        self.cost_exact(annual_salary, seconds).map(|c| round_half_up(c, 2))
    }
}

pub fn cost_per_instance(annual_salary: f64, seconds: f64) -> Result<f64, EvalError> {
    CostModel::default().cost_per_instance(annual_salary, seconds)
}

/// `100 * a / b`, in percent.
pub fn cost_ratio(a: f64, b: f64) -> Result<f64, EvalError> {
    if b == 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok(100.0 * a / b)
}

/// Two significant figures with a trailing `%`: 2.5%, 0.71%, 0.45%.
pub fn format_percent(p: f64) -> String {
    format!("{}%", format_sig2(p))
}

pub fn format_sig2(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mut mag = x.abs().log10().floor() as i32;
    loop {
        let decimals = 1 - mag;
        let rounded = if decimals >= 0 {
            round_half_up(x, decimals.min(9) as u32)
        } else {
            let unit = 10f64.powi(-decimals);
            round_half_up(x / unit, 0) * unit
        };
        if rounded.abs() >= 10f64.powi(mag + 1) {
            mag += 1;
            continue;
        }
        return format!("{:.*}", decimals.max(0) as usize, rounded);
    }
}

/// One human reference: a salary source and the seconds one instance
/// takes at that level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalaryRow {
    pub source: String,
    pub level: String,
    pub annual_salary: f64,
    pub seconds_per_instance: f64,
}

impl SalaryRow {
    pub fn new(source: &str, level: &str, annual_salary: f64, seconds_per_instance: f64) -> Self {
        Self {
            source: source.into(),
            level: level.into(),
            annual_salary,
            seconds_per_instance,
        }
    }

    pub fn cost(&self, model: &CostModel) -> Result<f64, EvalError> {
        model.cost_per_instance(self.annual_salary, self.seconds_per_instance)
    }
}

/// A negotiated per-instance rate with no salary behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRate {
    pub source: String,
    pub level: String,
    pub cost_per_instance: f64,
}

impl FixedRate {
    pub fn new(source: &str, level: &str, cost_per_instance: f64) -> Self {
        Self {
            source: source.into(),
            level: level.into(),
            cost_per_instance,
        }
    }
}

/// Figure time plus analysis time per level, seconds.
pub const SENIOR_SECONDS: f64 = 472.0 + 324.0;
pub const JUNIOR_SECONDS: f64 = 645.0 + 388.0;
pub const INTERN_SECONDS: f64 = 648.0 + 173.0;

/// Market salaries for data analysts in Singapore, USD per year.
pub fn reference_salary_rows() -> Vec<SalaryRow> {
    vec![
        SalaryRow::new("levels.fyi", "Senior DA", 90_421.0, SENIOR_SECONDS),
        SalaryRow::new("levels.fyi", "Entry Level DA", 37_661.0, JUNIOR_SECONDS),
        SalaryRow::new("Glassdoor", "Senior DA", 86_300.0, SENIOR_SECONDS),
        SalaryRow::new("Glassdoor", "Junior DA", 50_000.0, JUNIOR_SECONDS),
        SalaryRow::new("Glassdoor", "Intern DA", 14_400.0, INTERN_SECONDS),
    ]
}

/// What the hired annotators were paid per instance.
pub fn reference_annotation_rates() -> Vec<FixedRate> {
    vec![
        FixedRate::new("Our Annotation", "Senior DA", 11.0),
        FixedRate::new("Our Annotation", "Junior DA", 7.0),
        FixedRate::new("Our Annotation", "Intern DA", 2.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_per_year() {
        assert_eq!(CostModel::default().seconds_per_year(), 12 * 21 * 8 * 3600);
    }

    #[test]
    fn non_positive_inputs() {
        assert!(matches!(cost_per_instance(0.0, 10.0), Err(EvalError::NonPositiveInput(_))));
        assert!(matches!(cost_per_instance(100.0, -1.0), Err(EvalError::NonPositiveInput(_))));
        assert!(matches!(cost_per_instance(f64::NAN, 1.0), Err(EvalError::NonPositiveInput(_))));
        assert!(matches!(cost_ratio(1.0, 0.0), Err(EvalError::DivisionByZero)));
    }

    #[test]
    fn rounds_to_cents() {
        // 7257.6 per year over 7,257,600 s is one tenth of a cent per second.
        assert_eq!(cost_per_instance(7257.6, 5.0).unwrap(), 0.01);
        assert_eq!(cost_per_instance(7257.6, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn sig2() {
        assert_eq!(format_sig2(2.5), "2.5");
        assert_eq!(format_sig2(0.714285), "0.71");
        assert_eq!(format_sig2(0.454545), "0.45");
        assert_eq!(format_sig2(9.96), "10");
        assert_eq!(format_sig2(0.0996), "0.10");
        assert_eq!(format_sig2(123.0), "120");
        assert_eq!(format_sig2(45.0), "45");
        assert_eq!(format_percent(2.5), "2.5%");
    }
}
