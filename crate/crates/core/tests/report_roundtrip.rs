//! CSV round trips and structural checks on the generated SVG.

use std::collections::{BTreeMap, HashSet};

use basinlab::experiment::{jitter_params, RatioInterval};
use basinlab::report::{self, SummaryRow};
use basinlab::{build_cell_grid, run_ensemble, BuiltinField, EnsembleConfig, Region};

/// One parsed element: name and attributes.
#[derive(Debug)]
struct Element {
    name: String,
    attrs: BTreeMap<String, String>,
}

/// Minimal XML well-formedness check: balanced tags, quoted unique
/// attributes, valid entity references and a single root element.
fn parse_xml(doc: &str) -> Result<Vec<Element>, String> {
    let b = doc.as_bytes();
    let mut i = 0;
    let mut stack: Vec<String> = Vec::new();
    let mut elements = Vec::new();
    let mut roots = 0;
    let name_char = |c: u8| c.is_ascii_alphanumeric() || matches!(c, b'_' | b'-' | b':' | b'.');
    let check_entities = |text: &str| -> Result<(), String> {
        let mut rest = text;
        while let Some(pos) = rest.find('&') {
            let tail = &rest[pos..];
            let end = tail.find(';').ok_or("unterminated entity")?;
            let ent = &tail[1..end];
            let ok = matches!(ent, "amp" | "lt" | "gt" | "quot" | "apos")
                || (ent.starts_with('#') && ent.len() > 1);
            if !ok {
                return Err(format!("bad entity &{ent};"));
            }
            rest = &tail[end + 1..];
        }
        Ok(())
    };
    while i < b.len() {
        if b[i] != b'<' {
            let start = i;
            while i < b.len() && b[i] != b'<' {
                if b[i] == b'>' {
                    return Err(format!("stray `>` at {i}"));
                }
                i += 1;
            }
            let text = &doc[start..i];
            if stack.is_empty() && !text.trim().is_empty() {
                return Err("text outside the root element".into());
            }
            check_entities(text)?;
            continue;
        }
        i += 1;
        if b.get(i) == Some(&b'/') {
            i += 1;
            let start = i;
            while i < b.len() && name_char(b[i]) {
                i += 1;
            }
            let name = &doc[start..i];
            if b.get(i) != Some(&b'>') {
                return Err(format!("malformed closing tag `{name}`"));
            }
            i += 1;
            match stack.pop() {
                Some(open) if open == name => {}
                other => return Err(format!("closing `{name}` does not match {other:?}")),
            }
            continue;
        }
        let start = i;
        while i < b.len() && name_char(b[i]) {
            i += 1;
        }
        let name = doc[start..i].to_string();
        if name.is_empty() {
            return Err(format!("empty tag name at {start}"));
        }
        let mut attrs = BTreeMap::new();
        let self_closing;
        loop {
            while i < b.len() && b[i].is_ascii_whitespace() {
                i += 1;
            }
            match b.get(i) {
                Some(b'/') if b.get(i + 1) == Some(&b'>') => {
                    i += 2;
                    self_closing = true;
                    break;
                }
                Some(b'>') => {
                    i += 1;
                    self_closing = false;
                    break;
                }
                Some(_) => {}
                None => return Err("unterminated tag".into()),
            }
            let a = i;
            while i < b.len() && name_char(b[i]) {
                i += 1;
            }
            let attr = doc[a..i].to_string();
            if attr.is_empty() || b.get(i) != Some(&b'=') || b.get(i + 1) != Some(&b'"') {
                return Err(format!("malformed attribute in `{name}` at {a}"));
            }
            i += 2;
            let v = i;
            while i < b.len() && b[i] != b'"' {
                if b[i] == b'<' {
                    return Err(format!("`<` inside attribute `{attr}`"));
                }
                i += 1;
            }
            let value = doc[v..i].to_string();
            check_entities(&value)?;
            i += 1;
            if attrs.insert(attr.clone(), value).is_some() {
                return Err(format!("duplicate attribute `{attr}` on `{name}`"));
            }
        }
        if stack.is_empty() {
            roots += 1;
        }
        if !self_closing {
            stack.push(name.clone());
        }
        elements.push(Element { name, attrs });
    }
    if !stack.is_empty() {
        return Err(format!("unclosed elements {stack:?}"));
    }
    if roots != 1 {
        return Err(format!("{roots} root elements"));
    }
    let root = &elements[0];
    if root.name != "svg"
        || root.attrs.get("xmlns").map(String::as_str) != Some("http://www.w3.org/2000/svg")
    {
        return Err("root is not an svg element with the SVG namespace".into());
    }
    Ok(elements)
}

#[test]
fn validator_rejects_broken_documents() {
    let ok = r#"<svg xmlns="http://www.w3.org/2000/svg"><g><rect x="1"/></g></svg>"#;
    assert!(parse_xml(ok).is_ok());
    for bad in [
        r#"<svg xmlns="http://www.w3.org/2000/svg"><g></svg>"#,
        r#"<svg xmlns="http://www.w3.org/2000/svg"><rect x=1/></svg>"#,
        r#"<svg xmlns="http://www.w3.org/2000/svg"><rect x="1" x="2"/></svg>"#,
        r#"<svg xmlns="http://www.w3.org/2000/svg">a & b</svg>"#,
        r#"<svg xmlns="http://www.w3.org/2000/svg"></svg><svg xmlns="http://www.w3.org/2000/svg"></svg>"#,
        r#"<svg><rect/></svg>"#,
    ] {
        assert!(parse_xml(bad).is_err(), "{bad}");
    }
}

#[test]
fn trials_summary_and_histogram_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = EnsembleConfig::new(jitter_params(0.09), 3000, 17);
    let run = run_ensemble(&config).unwrap();
    assert!(run.stats.n_out > 0 && run.stats.n_near_critical + run.stats.n_hill > 0);

    let trials = dir.path().join("trials.csv");
    report::write_trials_csv(&trials, &run.outcomes).unwrap();
    let back = report::read_trials_csv(&trials).unwrap();
    assert_eq!(back.len(), run.outcomes.len());
    for (a, b) in back.iter().zip(&run.outcomes) {
        assert_eq!(a.trial_index, b.trial_index);
        assert_eq!(a.start.x.to_bits(), b.start.x.to_bits());
        assert_eq!(a.start.y.to_bits(), b.start.y.to_bits());
        assert_eq!(a.end.x.to_bits(), b.end.x.to_bits());
        assert_eq!(a.end.y.to_bits(), b.end.y.to_bits());
        assert_eq!(a.cell, b.cell);
        assert_eq!(a.bin, b.bin);
        assert_eq!(a.steps_taken, b.steps_taken);
        assert_eq!(a.final_grad_norm.to_bits(), b.final_grad_norm.to_bits());
        assert_eq!(a.final_value.to_bits(), b.final_value.to_bits());
    }

    let summary = dir.path().join("summary.csv");
    let row = SummaryRow::from_ensemble(&config.params, &run.stats);
    let undefined = SummaryRow {
        r: None,
        r_ci: None,
        n_deep: 0,
        ..row.clone()
    };
    let rows = vec![row, undefined];
    report::write_summary_csv(&summary, &rows).unwrap();
    let back = report::read_summary_csv(&summary).unwrap();
    assert_eq!(back, rows);
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(
        text.lines().next().unwrap(),
        report::SUMMARY_HEADER.join(",")
    );
    assert!(text.lines().nth(2).unwrap().contains(",,,"));

    let histogram = dir.path().join("histogram.csv");
    report::write_histogram_csv(&histogram, &run.grid, &run.stats.counts).unwrap();
    let back = report::read_histogram_csv(&histogram).unwrap();
    assert_eq!(back.len(), run.grid.len());
    for ((cell, class, count), expected) in back.iter().zip(run.grid.indices()) {
        assert_eq!(*cell, expected);
        assert_eq!(class, run.grid.class(expected).kind.as_str());
        assert_eq!(*count, run.stats.counts[run.grid.flat_index(expected)]);
    }
}

#[test]
fn summary_reals_round_trip_for_awkward_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    let rows: Vec<SummaryRow> = [0.1, 1.0 / 3.0, 1e-300, 123456.789e10, 0.0]
        .iter()
        .map(|&v| SummaryRow {
            tau: v,
            eps: v * 0.7,
            trials: 3,
            steps: 4,
            n_deep: 1,
            n_shallow: 1,
            n_hill: 0,
            n_near_critical: 0,
            n_out: 1,
            r: Some(v / 7.0),
            r_ci: Some(RatioInterval {
                lo: v / 9.0,
                hi: v * 3.0,
            }),
            phi: 2.0 / 3.0,
        })
        .collect();
    report::write_summary_csv(&path, &rows).unwrap();
    assert_eq!(report::read_summary_csv(&path).unwrap(), rows);
}

#[test]
fn reading_a_missing_file_names_the_path() {
    let err =
        report::read_summary_csv(std::path::Path::new("/nonexistent/summary.csv")).unwrap_err();
    assert!(
        err.to_string().contains("/nonexistent/summary.csv"),
        "{err}"
    );
}

#[test]
fn histogram_svg_is_well_formed_with_one_rect_per_cell() {
    let grid = build_cell_grid(&BuiltinField, &Region::default()).unwrap();
    let mut counts = vec![0u64; grid.len()];
    counts[5] = 40;
    let svg = report::render_histogram_svg(&grid, &counts);
    let elements = parse_xml(&svg).unwrap();
    let cells: Vec<&Element> = elements
        .iter()
        .filter(|e| e.name == "rect" && e.attrs.get("class").is_some_and(|c| c.starts_with("cell")))
        .collect();
    assert_eq!(cells.len(), grid.len());
    let (r, g, b) = report::MAX_FILL;
    let full = format!("rgb({r},{g},{b})");
    assert_eq!(cells.iter().filter(|e| e.attrs["fill"] == full).count(), 1);
    assert_eq!(
        cells
            .iter()
            .filter(|e| e.attrs["fill"] == "rgb(255,255,255)")
            .count(),
        grid.len() - 1
    );
    let ids: HashSet<(String, String)> = cells
        .iter()
        .map(|e| (e.attrs["data-i"].clone(), e.attrs["data-j"].clone()))
        .collect();
    assert_eq!(ids.len(), grid.len());

    // Larger y is drawn higher: the top row has the smallest SVG y.
    let y_of = |i: usize, j: usize| -> f64 {
        cells
            .iter()
            .find(|e| e.attrs["data-i"] == i.to_string() && e.attrs["data-j"] == j.to_string())
            .unwrap()
            .attrs["y"]
            .parse()
            .unwrap()
    };
    assert!(y_of(0, grid.ny() - 1) < y_of(0, 0));
    // Widths follow the true cell widths: 0.5 units for every column.
    for e in &cells {
        let w: f64 = e.attrs["width"].parse().unwrap();
        assert!((w - 100.0).abs() < 1e-9, "{w}");
    }
    // Well classes are distinguishable by outline.
    let strokes: HashSet<&String> = cells.iter().map(|e| &e.attrs["stroke"]).collect();
    assert_eq!(strokes.len(), 3);
}

#[test]
fn empty_histogram_renders_blank() {
    let grid = build_cell_grid(&BuiltinField, &Region::default()).unwrap();
    let svg = report::render_histogram_svg(&grid, &vec![0; grid.len()]);
    let elements = parse_xml(&svg).unwrap();
    assert!(elements
        .iter()
        .filter(|e| e.attrs.contains_key("data-count"))
        .all(|e| e.attrs["fill"] == "rgb(255,255,255)"));
}

fn sweep_rows() -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (k, tau) in [0.01, 0.04, 0.06].into_iter().enumerate() {
        for e in 0..7 {
            let eps = e as f64 * 0.05;
            let r = if k == 2 && e >= 5 {
                None
            } else {
                Some(0.9 / (1.0 + 10.0 * eps))
            };
            rows.push(SummaryRow {
                tau,
                eps,
                trials: 100,
                steps: 500,
                n_deep: 50,
                n_shallow: 20,
                n_hill: 10,
                n_near_critical: 0,
                n_out: 20,
                r,
                r_ci: None,
                phi: 0.8,
            });
        }
    }
    rows
}

#[test]
fn sweep_svg_has_one_panel_per_tau_in_order() {
    let rows = sweep_rows();
    let svg = report::render_sweep_svg(&rows);
    let elements = parse_xml(&svg).unwrap();
    let panels: Vec<&String> = elements
        .iter()
        .filter(|e| e.name == "g" && e.attrs.get("class").map(String::as_str) == Some("panel"))
        .map(|e| &e.attrs["data-tau"])
        .collect();
    assert_eq!(panels, ["0.01", "0.04", "0.06"]);
    assert_eq!(elements.iter().filter(|e| e.name == "polyline").count(), 3);
    assert_eq!(elements.iter().filter(|e| e.name == "circle").count(), 19);
    assert_eq!(
        svg.matches("2 point(s) with undefined r omitted").count(),
        1
    );
    assert_eq!(svg, report::render_sweep_svg(&rows));
}
