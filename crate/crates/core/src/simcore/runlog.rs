use std::io::{self, Write};

/// Column names and units, in output order.
pub const COLUMNS: [(&str, &str); 24] = [
    ("t", "s"),
    ("v_dc", "V"),
    ("v_dc_ref", "V"),
    ("z_tilde1", "V^2*s"),
    ("z_tilde2", "V^2"),
    ("s_v", "V^(2p/q)"),
    ("rho", "W"),
    ("rho_hat", "W"),
    ("rho_eso", "W"),
    ("rho_tilde_est", "W"),
    ("y", "V^2/s"),
    ("i_d", "A"),
    ("i_q", "A"),
    ("i_d_ref", "A"),
    ("i_q_ref", "A"),
    ("u_v", "1"),
    ("u_d", "1"),
    ("u_q", "1"),
    ("s_d", "A"),
    ("s_q", "A"),
    ("i_a", "A"),
    ("i_a_ref", "A"),
    ("clamp_v", "1"),
    ("clamp_dq", "1"),
];

pub(crate) const NCOL: usize = COLUMNS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Col {
    T,
    VDc,
    VDcRef,
    ZTilde1,
    ZTilde2,
    SV,
    Rho,
    RhoHat,
    RhoEso,
    RhoTildeEst,
    Y,
    Id,
    Iq,
    IdRef,
    IqRef,
    Uv,
    Ud,
    Uq,
    Sd,
    Sq,
    Ia,
    IaRef,
    ClampV,
    ClampDq,
}

/// Uniformly sampled time series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    /// sample period (s)
    pub period: f64,
    cols: Vec<Vec<f64>>,
}

impl RunLog {
    pub fn new(period: f64, capacity: usize) -> Self {
        Self {
            period,
            cols: (0..NCOL).map(|_| Vec::with_capacity(capacity)).collect(),
        }
    }

    pub(crate) fn push(&mut self, row: &[f64; NCOL]) {
        for (c, v) in self.cols.iter_mut().zip(row) {
            c.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.cols[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn col(&self, c: Col) -> &[f64] {
        &self.cols[c as usize]
    }

    /// Column by name, as listed in [`COLUMNS`].
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        COLUMNS
            .iter()
            .position(|(n, _)| *n == name)
            .map(|i| self.cols[i].as_slice())
    }

    pub fn t(&self) -> &[f64] {
        self.col(Col::T)
    }

    /// Header line: `name [unit]` per column.
    pub fn header() -> String {
        COLUMNS
            .iter()
            .map(|(n, u)| format!("{n} [{u}]"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::header())?;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            for (j, c) in self.cols.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&c[k].to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_lists_every_column_with_units() {
        let h = RunLog::header();
        assert_eq!(h.split(',').count(), NCOL);
        assert!(h.starts_with("t [s],v_dc [V],"));
        assert_eq!(COLUMNS[Col::ClampDq as usize].0, "clamp_dq");
        assert_eq!(COLUMNS[Col::Ia as usize].0, "i_a");
    }

    #[test]
    fn csv_round_trip_values() {
        let mut log = RunLog::new(0.5, 2);
        let mut row = [0.0; NCOL];
        row[0] = 0.0;
        row[1] = 520.125;
        log.push(&row);
        row[0] = 0.5;
        row[1] = -1e-7;
        log.push(&row);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let v: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, -1e-7);
        assert_eq!(log.column("v_dc").unwrap(), &[520.125, -1e-7]);
    }
}
