//! Static SVG rendering of decomposition series.
//!
//! One chart per backtest: the seven cumulative series drawn as colored
//! polylines over the day axis, with a legend. When the input contains
//! missing delisting returns, the return-dependent lines (dlret, log_v,
//! log_u) are drawn twice: solid for the conservative bound and dashed for
//! the optimistic one.

use fgp::DecompositionSeries;
use std::fmt::Write;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 64.0;
const MARGIN_BOTTOM: f64 = 48.0;

pub const COLOR_LOG_G: &str = "#2ca02c"; // green
pub const COLOR_EG: &str = "#1f77b4"; // blue
pub const COLOR_C_TM: &str = "#d4b106"; // yellow
pub const COLOR_C_G: &str = "#ff7f0e"; // orange
pub const COLOR_DLRET: &str = "#d62728"; // red
pub const COLOR_LOG_V: &str = "#000000"; // black
pub const COLOR_LOG_U: &str = "#9467bd"; // purple

struct Line<'a> {
    label: &'a str,
    color: &'a str,
    dashed: bool,
    values: &'a [f64],
}

/// Renders a decomposition chart. `optimistic` supplies the second set of
/// return-dependent lines when both delisting-return bounds were computed.
pub fn render(
    title: &str,
    series: &DecompositionSeries,
    optimistic: Option<&DecompositionSeries>,
) -> String {
    let mut lines = vec![
        Line {
            label: "log G",
            color: COLOR_LOG_G,
            dashed: false,
            values: &series.log_g,
        },
        Line {
            label: "EG",
            color: COLOR_EG,
            dashed: false,
            values: &series.eg,
        },
        Line {
            label: "C_TM",
            color: COLOR_C_TM,
            dashed: false,
            values: &series.c_tm,
        },
        Line {
            label: "C_G",
            color: COLOR_C_G,
            dashed: false,
            values: &series.c_g,
        },
        Line {
            label: "DLRET",
            color: COLOR_DLRET,
            dashed: false,
            values: &series.dlret,
        },
        Line {
            label: "log V",
            color: COLOR_LOG_V,
            dashed: false,
            values: &series.log_v,
        },
        Line {
            label: "log U",
            color: COLOR_LOG_U,
            dashed: false,
            values: &series.log_u,
        },
    ];
    if let Some(opt) = optimistic {
        lines.push(Line {
            label: "DLRET (optimistic)",
            color: COLOR_DLRET,
            dashed: true,
            values: &opt.dlret,
        });
        lines.push(Line {
            label: "log V (optimistic)",
            color: COLOR_LOG_V,
            dashed: true,
            values: &opt.log_v,
        });
        lines.push(Line {
            label: "log U (optimistic)",
            color: COLOR_LOG_U,
            dashed: true,
            values: &opt.log_u,
        });
    }

    let n = series.len().max(2);
    let x_max = (n - 1) as f64;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for line in &lines {
        for &v in line.values {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = -1.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |day: f64| MARGIN_LEFT + day / x_max * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-size=\"15\" font-weight=\"bold\">{}</text>",
        MARGIN_LEFT,
        escape(title)
    );

    // Horizontal grid and y tick labels.
    for tick in ticks(y_min, y_max, 6) {
        let y = y_of(tick);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>",
            WIDTH - MARGIN_RIGHT
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            format_tick(tick)
        );
    }
    // Zero line, when visible.
    if y_min < 0.0 && y_max > 0.0 {
        let y = y_of(0.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#888888\" stroke-width=\"1\"/>",
            WIDTH - MARGIN_RIGHT
        );
    }
    // X axis ticks.
    for tick in ticks(0.0, x_max, 8) {
        if tick < 0.0 || tick > x_max {
            continue;
        }
        let x = x_of(tick);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#888888\" stroke-width=\"1\"/>",
            HEIGHT - MARGIN_BOTTOM,
            HEIGHT - MARGIN_BOTTOM + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            HEIGHT - MARGIN_BOTTOM + 20.0,
            format_tick(tick)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">day</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    // Axis frame.
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>"
    );

    // The polylines.
    for line in &lines {
        let mut points = String::new();
        for (i, &v) in line.values.iter().enumerate() {
            let _ = write!(points, "{:.2},{:.2} ", x_of(i as f64), y_of(v));
        }
        let dash = if line.dashed {
            " stroke-dasharray=\"6,4\""
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"{} points=\"{}\"/>",
            line.color,
            dash,
            points.trim_end()
        );
    }

    // Legend along the top.
    let mut x = MARGIN_LEFT;
    let y = MARGIN_TOP - 14.0;
    for line in &lines {
        let dash = if line.dashed {
            " stroke-dasharray=\"6,4\""
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"2\"{}/>",
            x + 18.0,
            line.color,
            dash
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
            x + 22.0,
            y + 4.0,
            escape(line.label)
        );
        x += 26.0 + 7.0 * line.label.len() as f64;
    }

    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Round tick positions covering `[lo, hi]` with a 1/2/5 step.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw_step = span / target as f64;
    let mag = 10f64.powf(raw_step.abs().log10().floor());
    let norm = raw_step / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.4}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fgp::{multiplicative_decomposition, Family, MarketPath};

    #[test]
    fn renders_well_formed_svg() {
        let path = MarketPath::from_panel(&[
            vec![2.0, 2.0],
            vec![3.0, 1.0],
            vec![3.0, 1.0, 1.0],
            vec![4.0, 2.0, 2.0],
        ])
        .unwrap();
        let series = multiplicative_decomposition(&path, &Family::equal(), true).unwrap();
        let svg = render("equal on fixture", &series, None);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 7);
        for color in [
            COLOR_LOG_G,
            COLOR_EG,
            COLOR_C_TM,
            COLOR_C_G,
            COLOR_DLRET,
            COLOR_LOG_V,
            COLOR_LOG_U,
        ] {
            assert!(svg.contains(color));
        }
        let both = render("with bounds", &series, Some(&series));
        assert_eq!(both.matches("<polyline").count(), 10);
        assert!(both.contains("stroke-dasharray"));
    }

    #[test]
    fn tick_helper_produces_round_steps() {
        for (lo, hi) in [(-0.731, 0.502), (0.0, 1999.0), (-3.0, -1.0), (0.0, 7e-4)] {
            let t = ticks(lo, hi, 6);
            assert!(t.len() >= 3 && t.len() <= 12, "({lo}, {hi}): {t:?}");
            assert!(t.iter().all(|&v| v >= lo && v <= hi));
            let step = t[1] - t[0];
            for pair in t.windows(2) {
                assert!((pair[1] - pair[0] - step).abs() < 1e-9 * step.abs());
            }
            let mantissa = step / 10f64.powf(step.log10().floor());
            assert!(
                [1.0, 2.0, 5.0].iter().any(|m| (mantissa - m).abs() < 1e-9),
                "step {step} is not a 1/2/5 step"
            );
        }
        assert!(ticks(-0.731, 0.502, 6).contains(&0.0));
    }
}
