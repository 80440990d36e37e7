//! CSV writers. Floats use Rust's shortest round-trip formatting, so equal
//! values always produce identical bytes.

use std::io::{self, Write};

use crate::bench::{CellResult, TableRow};
use crate::convergence_lab::TailRow;
use crate::estimator::{CentreSet, GridPosterior};
use crate::info_geometry::KlReport;
use crate::sim_engine::SimTrace;

/// `index,x,y,weight,log_weight`
pub fn write_posterior<W: Write>(w: &mut W, p: &GridPosterior, cs: &CentreSet) -> io::Result<()> {
    writeln!(w, "index,x,y,weight,log_weight")?;
    for (i, (c, lw)) in cs.centres().iter().zip(p.log_weights()).enumerate() {
        writeln!(w, "{i},{},{},{},{lw}", c.x, c.y, lw.exp())?;
    }
    Ok(())
}

/// `index,x,y,kl_nats,in_b`
pub fn write_kl_report<W: Write>(w: &mut W, r: &KlReport, cs: &CentreSet) -> io::Result<()> {
    writeln!(w, "index,x,y,kl_nats,in_b")?;
    for (i, (c, k)) in cs.centres().iter().zip(&r.kl).enumerate() {
        writeln!(w, "{i},{},{},{k},{}", c.x, c.y, u8::from(r.contains(i)))?;
    }
    Ok(())
}

/// Per-epoch rows: `k,t,sx_hat,sy_hat,entropy_nats,err_m`
pub fn write_trace<W: Write>(w: &mut W, tr: &SimTrace) -> io::Result<()> {
    writeln!(w, "k,t,sx_hat,sy_hat,entropy_nats,err_m")?;
    for e in &tr.epochs {
        writeln!(w, "{},{},{},{},{},{}", e.k, e.t, e.mean.x, e.mean.y, e.entropy, e.error)?;
    }
    Ok(())
}

/// Per-reading rows: `k,t,agent,x,y,d`
pub fn write_measurements<W: Write>(w: &mut W, tr: &SimTrace) -> io::Result<()> {
    writeln!(w, "k,t,agent,x,y,d")?;
    for m in &tr.measurements {
        writeln!(w, "{},{},{},{},{},{}", m.k, m.t, m.agent, m.location.x, m.location.y, u8::from(m.reading))?;
    }
    Ok(())
}

/// `M,spacing_m,e_inf_m,qualify_frac`
pub fn write_table1<W: Write>(w: &mut W, rows: &[TableRow]) -> io::Result<()> {
    writeln!(w, "M,spacing_m,e_inf_m,qualify_frac")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.m, r.spacing, r.e_inf, r.qualifying_fraction)?;
    }
    Ok(())
}

/// `k,rms_m`
pub fn write_curve<W: Write>(w: &mut W, cell: &CellResult) -> io::Result<()> {
    writeln!(w, "k,rms_m")?;
    for (k, r) in cell.ks.iter().zip(&cell.rms) {
        writeln!(w, "{k},{r}")?;
    }
    Ok(())
}

/// `n,eps,empirical_freq,hoeffding_bound`; the bound is empty outside its regime.
pub fn write_tail_table<W: Write>(w: &mut W, rows: &[TailRow]) -> io::Result<()> {
    writeln!(w, "n,eps,empirical_freq,hoeffding_bound")?;
    for r in rows {
        let b = r.bound.map(|b| b.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{b}", r.n, r.eps, r.empirical)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::TableRow;
    use crate::Rect;

    #[test]
    fn table_and_posterior_shapes() {
        let mut out = Vec::new();
        let rows = [TableRow { m: 100, spacing: 10.0, e_inf: 3.9, qualifying_fraction: 0.99 }];
        write_table1(&mut out, &rows).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "M,spacing_m,e_inf_m,qualify_frac\n100,10,3.9,0.99\n");

        let cs = CentreSet::uniform_grid(Rect::centred_square(1.0), 2).unwrap();
        let mut out = Vec::new();
        write_posterior(&mut out, &GridPosterior::uniform(4), &cs).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("0,-0.5,-0.5,0.25"));
    }

    #[test]
    fn tail_rows_blank_outside_regime() {
        let mut out = Vec::new();
        let rows = [TailRow { n: 10, eps: 1.0, empirical: 0.5, bound: None, trials: 10 }];
        write_tail_table(&mut out, &rows).unwrap();
        assert!(String::from_utf8(out).unwrap().ends_with("10,1,0.5,\n"));
    }
}
