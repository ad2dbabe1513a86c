//! Plain-text dump of SDP problems for debugging and regression tests.
//!
//! One block per matrix, row-major, `# name` headers. The loader accepts
//! exactly what the writer emits.

use super::{SdpProblem, SolverError};
use crate::linalg::Mat;
use std::fmt::Write as _;

pub fn write_sdp_problem(p: &SdpProblem) -> String {
    let mut out = String::new();
    let m = p.blocks.len();
    let n = p.f0.rows();
    writeln!(out, "# sdp {} {}", m, n).unwrap();
    writeln!(out, "# objective").unwrap();
    writeln!(out, "{}", join_f64(&p.objective)).unwrap();
    writeln!(out, "# signs").unwrap();
    let signs: Vec<String> =
        p.sign_constrained.iter().map(|&s| if s { "1" } else { "0" }.to_string()).collect();
    writeln!(out, "{}", signs.join(" ")).unwrap();
    writeln!(out, "# f0").unwrap();
    write_mat(&mut out, &p.f0);
    for (j, g) in p.blocks.iter().enumerate() {
        writeln!(out, "# block {j}").unwrap();
        write_mat(&mut out, g);
    }
    out
}

fn write_mat(out: &mut String, m: &Mat) {
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format!("{:?}", m.get(i, j))).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

pub fn read_sdp_problem(text: &str) -> Result<SdpProblem, SolverError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| SolverError::Io("empty dump".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "#" || parts[1] != "sdp" {
        return Err(SolverError::Io("missing sdp header".into()));
    }
    let m: usize = parts[2].parse().map_err(|_| SolverError::Io("bad var count".into()))?;
    let n: usize = parts[3].parse().map_err(|_| SolverError::Io("bad block size".into()))?;

    let expect = |lines: &mut dyn Iterator<Item = &str>, tag: &str| -> Result<(), SolverError> {
        match lines.next() {
            Some(l) if l.trim().starts_with(&format!("# {tag}")) => Ok(()),
            other => Err(SolverError::Io(format!("expected '# {tag}', found {other:?}"))),
        }
    };
    let parse_row = |line: &str, len: usize| -> Result<Vec<f64>, SolverError> {
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|_| SolverError::Io("bad number".into()))?;
        if vals.len() != len {
            return Err(SolverError::Io("row of wrong length".into()));
        }
        Ok(vals)
    };

    expect(&mut lines, "objective")?;
    let objective = parse_row(lines.next().ok_or_else(|| SolverError::Io("truncated".into()))?, m)?;
    expect(&mut lines, "signs")?;
    let sign_line = lines.next().ok_or_else(|| SolverError::Io("truncated".into()))?;
    let sign_constrained: Vec<bool> = sign_line
        .split_whitespace()
        .map(|t| t == "1")
        .collect();
    if sign_constrained.len() != m {
        return Err(SolverError::Io("sign row of wrong length".into()));
    }

    let read_mat = |lines: &mut dyn Iterator<Item = &str>| -> Result<Mat, SolverError> {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| SolverError::Io("truncated matrix".into()))?;
            rows.push(parse_row(line, n)?);
        }
        Ok(Mat::from_rows(&rows))
    };

    expect(&mut lines, "f0")?;
    let f0 = read_mat(&mut lines)?;
    let mut blocks = Vec::with_capacity(m);
    for j in 0..m {
        expect(&mut lines, &format!("block {j}"))?;
        blocks.push(read_mat(&mut lines)?);
    }
    let p = SdpProblem { f0, blocks, objective, sign_constrained };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let p = SdpProblem {
            f0: Mat::from_rows(&[vec![1.0, -0.25], vec![-0.25, 0.0]]),
            blocks: vec![
                Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, 0.0]]),
                Mat::from_rows(&[vec![0.5, 1e-17], vec![1e-17, -3.25]]),
            ],
            objective: vec![1.0, 0.0],
            sign_constrained: vec![false, true],
        };
        let text = write_sdp_problem(&p);
        let q = read_sdp_problem(&text).unwrap();
        assert_eq!(p.f0, q.f0);
        assert_eq!(p.blocks[1], q.blocks[1]);
        assert_eq!(p.objective, q.objective);
        assert_eq!(p.sign_constrained, q.sign_constrained);
    }
}
