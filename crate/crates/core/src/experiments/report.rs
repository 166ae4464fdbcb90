use std::fmt::Write as _;
use std::io::{self, Write};

use super::{ScalingReport, VariantScore};

const UNDEFINED: &str = "UNDEFINED";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Tab-separated score table, one row per variant, in input order.
pub fn write_scores(scores: &[VariantScore], w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "dataset\tmodel\tparams\tsteps\tr\tnormalized_r\tn")?;
    for s in scores {
        let (r, nr) = match s.pearson_r {
            Some(r) => (r.to_string(), opt(s.normalized_r)),
            None => (UNDEFINED.to_string(), UNDEFINED.to_string()),
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.dataset_id, s.model_name, s.parameter_count, s.training_steps, r, nr, s.n_heldout
        )?;
    }
    Ok(())
}

/// One summary row per named scaling analysis.
pub fn write_scaling_summary(reports: &[(&str, &ScalingReport)], w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "analysis\tslope\tintercept\tp_positive\tp_negative\tn_perm\tseed\tn_points\tn_undefined")?;
    for (name, r) in reports {
        writeln!(
            w,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.slope,
            r.intercept,
            r.p_positive,
            r.p_negative,
            r.n_permutations,
            r.seed,
            r.points.len() - r.n_undefined,
            r.n_undefined
        )?;
    }
    Ok(())
}

/// The numbers behind the scaling plot.
pub fn write_plot_data(reports: &[(&str, &ScalingReport)], w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "analysis\tmodel\tfamily\tlog10_params\tr")?;
    for (name, rep) in reports {
        for p in &rep.points {
            let r = p.pearson_r.map_or_else(|| UNDEFINED.to_string(), |r| r.to_string());
            writeln!(
                w,
                "{name}\t{}\t{}\t{}\t{r}",
                p.model_name,
                p.family,
                (p.parameter_count as f64).log10()
            )?;
        }
    }
    Ok(())
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 96.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.08 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Side-by-side panels of r against log10 parameter count, each with its
/// fitted line and a caption carrying slope and both p-values.
pub fn render_scaling_svg(reports: &[(&str, &ScalingReport)], title: &str) -> String {
    let width = PANEL_W * reports.len().max(1) as f64;
    let height = PANEL_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="16" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        escape(title)
    );

    for (i, (name, rep)) in reports.iter().enumerate() {
        let ox = i as f64 * PANEL_W;
        let (x0, y0) = (ox + MARGIN_L, MARGIN_T);
        let (pw, ph) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
        let pts = rep.xy();
        let (xlo, xhi) = range(pts.iter().map(|p| p.0));
        let (ylo, yhi) = range(pts.iter().map(|p| p.1).chain([0.0]));
        let sx = |x: f64| x0 + (x - xlo) / (xhi - xlo) * pw;
        let sy = |y: f64| y0 + ph - (y - ylo) / (yhi - ylo) * ph;

        let _ = writeln!(s, r#"<g id="panel-{i}">"#);
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            x0 + pw / 2.0,
            y0 - 6.0,
            escape(name)
        );
        if ylo < 0.0 && yhi > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{x0:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="#bbb" stroke-dasharray="3,3"/>"##,
                sy(0.0),
                x0 + pw,
                sy(0.0)
            );
        }
        for k in 0..=4 {
            let xv = xlo + (xhi - xlo) * k as f64 / 4.0;
            let yv = ylo + (yhi - ylo) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"#,
                sx(xv),
                y0 + ph + 14.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
                x0 - 4.0,
                sy(yv) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">log10 parameters</text>"#,
            x0 + pw / 2.0,
            y0 + ph + 30.0
        );

        let mut families: Vec<&str> = rep.points.iter().map(|p| p.family.as_str()).collect();
        families.sort_unstable();
        families.dedup();
        for p in &rep.points {
            let Some(r) = p.pearson_r else { continue };
            let colour = PALETTE[families.iter().position(|f| *f == p.family).unwrap_or(0) % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{colour}"><title>{} r={r}</title></circle>"#,
                sx((p.parameter_count as f64).log10()),
                sy(r),
                escape(&p.model_name)
            );
        }
        let (lx1, lx2) = (xlo, xhi);
        let line = |x: f64| rep.intercept + rep.slope * x;
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000" stroke-width="1.5"/>"##,
            sx(lx1),
            sy(line(lx1)),
            sx(lx2),
            sy(line(lx2))
        );

        let caption = [
            format!("slope = {:.4} per decade, intercept = {:.4}", rep.slope, rep.intercept),
            format!("p(slope > 0) = {:.4}, p(slope < 0) = {:.4}", rep.p_positive, rep.p_negative),
            format!(
                "permutations = {}, seed = {}, undefined = {}",
                rep.n_permutations, rep.seed, rep.n_undefined
            ),
        ];
        let _ = writeln!(s, r#"<g class="caption">"#);
        for (j, line) in caption.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                ox + 12.0,
                y0 + ph + 48.0 + 14.0 * j as f64,
                escape(line)
            );
        }
        let _ = writeln!(s, "</g>\n</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(name: &str, params: u64, r: Option<f64>) -> VariantScore {
        VariantScore {
            model_name: name.into(),
            family: "f".into(),
            parameter_count: params,
            training_steps: 143_000,
            dataset_id: "d".into(),
            pearson_r: r,
            normalized_r: r.map(|r| r / 0.32),
            n_heldout: 10,
        }
    }

    #[test]
    fn score_rows() {
        let mut out = Vec::new();
        write_scores(&[score("a", 70_000_000, Some(0.16)), score("b", 10, None)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "dataset\tmodel\tparams\tsteps\tr\tnormalized_r\tn");
        assert_eq!(lines[1], "d\ta\t70000000\t143000\t0.16\t0.5\t10");
        assert_eq!(lines[2], "d\tb\t10\t143000\tUNDEFINED\tUNDEFINED\t10");
    }

    #[test]
    fn svg_has_caption_and_points() {
        let pts = vec![score("a", 1_000, Some(0.1)), score("b", 10_000, Some(0.2)), score("c", 100_000, None)];
        let rep = ScalingReport {
            points: pts,
            slope: 0.1,
            intercept: -0.2,
            p_positive: 0.01,
            p_negative: 0.99,
            n_permutations: 1000,
            seed: 3,
            n_undefined: 1,
        };
        let svg = render_scaling_svg(&[("raw", &rep)], "t & u");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("p(slope &gt; 0) = 0.0100"));
        assert!(svg.contains("t &amp; u"));
        assert!(svg.contains("undefined = 1"));
    }
}
