use super::design::DesignTable;
use crate::linalg::Lower;
use crate::scalar::Scalar;

/// Correlated random intercepts/slopes for one grouping factor, stored
/// non-centred: the effects of group `g` are `diag(sd) · L · z_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomBlock<T> {
    pub sd: Vec<T>,
    pub corr_chol: Lower<T>,
    /// Row-major `n_groups × k` standardised effects.
    pub z: Vec<T>,
}

impl<T: Scalar> RandomBlock<T> {
    pub fn k(&self) -> usize {
        self.sd.len()
    }

    pub fn n_groups(&self) -> usize {
        self.z.len() / self.k().max(1)
    }

    /// Row-major `n_groups × k` matrix of group effects.
    pub fn effects(&self) -> Vec<T> {
        let k = self.k();
        let mut out = vec![T::zero(); self.z.len()];
        let mut v = vec![T::zero(); k];
        for (zg, ug) in self.z.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
            self.corr_chol.mul_vec(zg, &mut v);
            for ((u, &vi), &s) in ug.iter_mut().zip(&v).zip(&self.sd) {
                *u = s * vi;
            }
        }
        out
    }
}

/// One complete draw of every parameter of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    /// One coefficient per design effect; a zeroed effect holds zero.
    pub beta: Vec<T>,
    pub subject: Option<RandomBlock<T>>,
    pub item: Option<RandomBlock<T>>,
    pub sigma: T,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        let block = |b: &RandomBlock<T>| RandomBlock {
            sd: c(&b.sd),
            corr_chol: Lower::from_rows(b.k(), c(b.corr_chol.as_slice())).expect("lower-triangular"),
            z: c(&b.z),
        };
        ParameterSet {
            beta: c(&self.beta),
            subject: self.subject.as_ref().map(block),
            item: self.item.as_ref().map(block),
            sigma: U::lit(self.sigma.as_f64()),
        }
    }
}

/// A simulated (or observed) dataset over a design table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub table: DesignTable,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(table: DesignTable, y: Vec<f64>) -> Self {
        Dataset { table, y }
    }

    pub fn table(&self) -> &DesignTable {
        &self.table
    }

    /// CSV with one row per observation: ids, condition, sum codes, response.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let t = self.table();
        write!(w, "row,subject,item,condition")?;
        for e in &t.effects {
            write!(w, ",{}", e.label())?;
        }
        writeln!(w, ",y")?;
        for r in 0..t.n_rows() {
            write!(w, "{},{},{},{}", r, t.subject[r], t.item[r], t.condition[r])?;
            for c in t.row_codes(r) {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{:?}", self.y[r])?;
        }
        Ok(())
    }
}
