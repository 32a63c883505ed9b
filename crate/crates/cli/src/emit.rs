//! File writers: surface CSVs, JSON documents and gnuplot scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use televar::metrics::{AxesMode, NormalizeMode};
use televar::Surface;

/// Round-trip float formatting (17 significant digits); absent or
/// non-finite values become `NaN`.
fn num(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        _ => "NaN".to_string(),
    }
}

fn axes_suffix(mode: NormalizeMode) -> &'static str {
    match mode {
        NormalizeMode::Std => "std",
        NormalizeMode::Variance => "var",
    }
}

/// One row per outcome: raw axes, normalized axes, then the values of
/// each surface. All surfaces must share the lattice of `raw`. Rows of
/// equal `y_in` form blocks separated by a blank line.
pub fn surface_csv(raw: &Surface, normalized: &Surface, columns: &[(&str, &Surface)], mode: NormalizeMode) -> String {
    debug_assert_ne!(normalized.axes_mode, AxesMode::Raw);
    let e1 = raw.e1_kind.label();
    let sfx = axes_suffix(mode);
    let mut s = format!("y_in,{e1},y_in_{sfx},{e1}_{sfx}");
    for (name, _) in columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for i in 0..raw.rows() {
        if i > 0 {
            s.push('\n');
        }
        for j in 0..raw.cols() {
            let _ = write!(
                s,
                "{},{},{},{}",
                num(Some(raw.y_in_axis[i])),
                num(Some(raw.e1_axis[j])),
                num(Some(normalized.y_in_axis[i])),
                num(Some(normalized.e1_axis[j]))
            );
            for (_, surf) in columns {
                s.push(',');
                s.push_str(&num(surf.get(i, j)));
            }
            s.push('\n');
        }
    }
    s
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    fs::write(dir.join(name), contents)
}

/// Two side-by-side heatmaps over the normalized axes.
pub fn surface_plot(title: &str, e1_label: &str, mode: NormalizeMode) -> String {
    let unit = match mode {
        NormalizeMode::Std => "std. dev.",
        NormalizeMode::Variance => "variance",
    };
    let e1 = if e1_label == "y1" { "Y_1" } else { "X_1" };
    format!(
        "# {title}\n\
         set terminal pngcairo size 1200,520\n\
         set output 'surfaces.png'\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set view map\n\
         set pm3d map corners2color c1\n\
         set size ratio 1\n\
         set xlabel 'Y_in ({unit})'\n\
         set ylabel '{e1} ({unit})'\n\
         set multiplot layout 1,2 title '{title}'\n\
         set title 'probability density'\n\
         splot 'P.csv' using 3:4:6 with pm3d notitle\n\
         set title 'fidelity'\n\
         set cbrange [0:1]\n\
         splot 'F.csv' using 3:4:5 with pm3d notitle\n\
         unset multiplot\n"
    )
}

/// Clustered bars, one cluster per input and one bar per protocol.
/// Missing cells are written as `NaN`.
pub fn bars_plot(label: &str, protocols: &[&str], rows: &[(String, Vec<Option<f64>>)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# averaged fidelity ({label})");
    s.push_str("set terminal pngcairo size 800,500\nset output 'bars.png'\n");
    s.push_str("$avg << EOD\ninput");
    for p in protocols {
        let _ = write!(s, " {p}");
    }
    s.push('\n');
    for (input, values) in rows {
        let _ = write!(s, "\"{input}\"");
        for v in values {
            let _ = write!(s, " {}", num(*v));
        }
        s.push('\n');
    }
    s.push_str("EOD\n");
    let _ = writeln!(s, "set ylabel 'averaged fidelity ({label})'");
    s.push_str(
        "set yrange [0:1]\n\
         set style data histograms\n\
         set style histogram clustered gap 1\n\
         set style fill solid 0.8 border -1\n\
         set key top left autotitle columnhead\n",
    );
    let cols: Vec<String> = (0..protocols.len())
        .map(|c| if c == 0 { format!("$avg using {}:xtic(1)", c + 2) } else { format!("'' using {}", c + 2) })
        .collect();
    let _ = writeln!(s, "plot {}", cols.join(", "));
    s
}
