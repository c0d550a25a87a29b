//! Trajectory CSV emission and re-ingestion.
//!
//! Header: `t,theta_1..theta_n,theta_hat_1..theta_hat_n,y,ghat_1..ghat_n,
//! u_1..u_n[,gamma_11..gamma_nn]`. Values are printed with 17 significant
//! digits so a write/read cycle reproduces every f64 bit-exactly.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use anyhow::{bail, Context, Result};
use uvesc_core::{Matrix, Trajectory};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let n = traj.dim();
    let mut w = BufWriter::new(out);

    let mut header = vec!["t".to_string()];
    for name in ["theta", "theta_hat"] {
        for i in 1..=n {
            header.push(format!("{name}_{i}"));
        }
    }
    header.push("y".into());
    for i in 1..=n {
        header.push(format!("ghat_{i}"));
    }
    for i in 1..=n {
        header.push(format!("u_{i}"));
    }
    if traj.gamma.is_some() {
        for i in 1..=n {
            for j in 1..=n {
                header.push(format!("gamma_{i}{j}"));
            }
        }
    }
    writeln!(w, "{}", header.join(","))?;

    for k in 0..traj.len() {
        let mut fields = vec![fmt(traj.times[k])];
        fields.extend(traj.theta[k].iter().copied().map(fmt));
        fields.extend(traj.theta_hat[k].iter().copied().map(fmt));
        fields.push(fmt(traj.y[k]));
        fields.extend(traj.g_hat[k].iter().copied().map(fmt));
        fields.extend(traj.u[k].iter().copied().map(fmt));
        if let Some(gamma) = &traj.gamma {
            fields.extend(gamma[k].as_slice().iter().copied().map(fmt));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_file(path: &std::path::Path, traj: &Trajectory) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    write_trajectory(file, traj)
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Trajectory> {
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => bail!("empty trajectory file"),
    };
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("theta_") && !c.starts_with("theta_hat")).count();
    if n == 0 {
        bail!("header has no theta columns: {header}");
    }
    let has_gamma = cols.iter().any(|c| c.starts_with("gamma_"));
    let expected = 1 + 4 * n + 1 + if has_gamma { n * n } else { 0 };
    if cols.len() != expected {
        bail!("header has {} columns, expected {expected} for n = {n}", cols.len());
    }

    let mut traj = Trajectory {
        times: Vec::new(),
        theta: Vec::new(),
        theta_hat: Vec::new(),
        y: Vec::new(),
        g_hat: Vec::new(),
        u: Vec::new(),
        gamma: has_gamma.then(Vec::new),
    };
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            bail!("row {} has {} fields, expected {expected}", lineno + 2, fields.len());
        }
        let mut it = fields.iter();
        let mut take = |count: usize| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| {
                    let s = it.next().expect("length checked");
                    s.parse::<f64>().with_context(|| format!("bad float {s:?} on row {}", lineno + 2))
                })
                .collect()
        };
        traj.times.push(take(1)?[0]);
        traj.theta.push(take(n)?);
        traj.theta_hat.push(take(n)?);
        traj.y.push(take(1)?[0]);
        traj.g_hat.push(take(n)?);
        traj.u.push(take(n)?);
        if let Some(gammas) = traj.gamma.as_mut() {
            let flat = take(n * n)?;
            gammas.push(Matrix::from_flat(n, &flat)?);
        }
    }
    traj.validate()?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trajectory(with_gamma: bool) -> Trajectory {
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.25).collect();
        Trajectory {
            times: times.clone(),
            theta: times.iter().map(|t| vec![t.sin(), t.cos()]).collect(),
            theta_hat: times.iter().map(|t| vec![t * 1.1, -t]).collect(),
            y: times.iter().map(|t| 100.0 + t * std::f64::consts::PI).collect(),
            g_hat: times.iter().map(|t| vec![t * 7.0, t * -5.0]).collect(),
            u: times.iter().map(|t| vec![-0.025 * t.signum(), 0.0]).collect(),
            gamma: with_gamma.then(|| {
                times
                    .iter()
                    .map(|t| Matrix::from_flat(2, &[*t, 0.1, 0.1, t * t]).unwrap())
                    .collect()
            }),
        }
    }

    #[test]
    fn round_trip_is_field_exact() {
        for with_gamma in [false, true] {
            let traj = sample_trajectory(with_gamma);
            let mut buf = Vec::new();
            write_trajectory(&mut buf, &traj).unwrap();
            let back = read_trajectory(buf.as_slice()).unwrap();
            assert_eq!(traj, back);
        }
    }

    #[test]
    fn header_shape() {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &sample_trajectory(true)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "t,theta_1,theta_2,theta_hat_1,theta_hat_2,y,ghat_1,ghat_2,u_1,u_2,\
             gamma_11,gamma_12,gamma_21,gamma_22"
        );
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "t,theta_1,theta_hat_1,y,ghat_1,u_1\n0.0,1.0,2.0,3.0,4.0\n";
        assert!(read_trajectory(text.as_bytes()).is_err());
    }
}
