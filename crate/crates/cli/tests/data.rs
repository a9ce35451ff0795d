use panelbounds_cli::data::{read_panel_csv, write_panel_csv};
use panelbounds_cli::error::CliError;

fn err(text: &str) -> String {
    match read_panel_csv(text.as_bytes()) {
        Err(CliError::Validation(m)) => m,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn two_by_two_panel() {
    let p = read_panel_csv("id,t,y,x1\na,1,0,0.5\na,2,1,1\nb,1,1,0\nb,2,1,2\n".as_bytes()).unwrap();
    assert_eq!((p.n, p.periods, p.covariates), (2, 2, 1));
    assert_eq!(p.y, vec![0, 1, 1, 1]);
    assert_eq!(p.x, vec![0.5, 1.0, 0.0, 2.0]);
    assert!(p.y0.is_none());
}

#[test]
fn units_keep_first_appearance_order_and_rows_may_be_shuffled() {
    let p = read_panel_csv("t,id,x1,y\n2,z,1,1\n1,a,0,0\n1,z,3,0\n2,a,4,1\n".as_bytes()).unwrap();
    assert_eq!(p.x, vec![3.0, 1.0, 0.0, 4.0]);
    assert_eq!(p.y, vec![0, 1, 0, 1]);
}

#[test]
fn missing_row_names_the_unit() {
    let mut text = String::from("id,t,y,x1\n");
    for id in 1..=8 {
        for t in 1..=3 {
            if !(id == 7 && t == 3) {
                text.push_str(&format!("{id},{t},0,{t}\n"));
            }
        }
    }
    let m = err(&text);
    assert!(m.contains("unbalanced"), "{m}");
    assert!(m.contains("7 (missing t = 3)"), "{m}");
    assert!(!m.contains("8 ("), "{m}");
}

#[test]
fn non_binary_outcome_cites_the_row() {
    let mut text = String::from("id,t,y,x1\n");
    for r in 1..=12 {
        let y = if r == 11 { 2 } else { 0 };
        text.push_str(&format!("{},{},{y},0\n", (r + 1) / 2, 2 - r % 2));
    }
    let m = err(&text);
    assert!(m.contains("row 11"), "{m}");
    assert!(m.contains("y must be 0 or 1"), "{m}");
}

#[test]
fn duplicate_and_malformed_rows() {
    assert!(err("id,t,y,x1\n1,1,0,0\n1,1,1,0\n").contains("duplicate row for id 1, t 1"));
    assert!(err("id,t,y,x1\n1,0,0,0\n").contains("period"));
    assert!(err("id,t,y,x1\n1,1,0,abc\n").contains("x1"));
    assert!(err("id,t,y,x2\n1,1,0,0\n").contains("x1 is missing"));
    assert!(err("id,t,x1\n1,1,0\n").contains("`y`"));
    assert!(err("id,t,y,x1,w\n1,1,0,0,3\n").contains("unexpected column `w`"));
    assert!(err("id,t,y,x1\n").contains("no data rows"));
}

#[test]
fn initial_conditions_must_be_constant_within_a_unit() {
    let p = read_panel_csv("id,t,y,x1,y0\n1,1,0,0,1\n1,2,1,0,1\n".as_bytes()).unwrap();
    assert_eq!(p.y0, Some(vec![1]));
    assert!(err("id,t,y,x1,y0\n1,1,0,0,1\n1,2,1,0,0\n").contains("y0 differs"));
}

#[test]
fn write_then_read_round_trips() {
    use panelbounds::sims::{generate, DgpKind, DgpSpec};
    for kind in [DgpKind::StaticContinuous, DgpKind::DynamicContinuous] {
        let panel = generate(&DgpSpec::new(kind, 0.7, 25, 4, 3).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&panel, &mut buf).unwrap();
        assert_eq!(read_panel_csv(buf.as_slice()).unwrap(), panel);
    }
}
