//! Fixed numeric formatting for CSV artifacts: 17 significant digits, `.` decimal, `\n` endings.

/// Scientific notation with 17 significant digits, so every `f64` round-trips.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        // normalise -0
        return format!("{:.16e}", 0.0);
    }
    format!("{v:.16e}")
}

pub fn csv_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = headers.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
