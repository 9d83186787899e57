//! `#[serde(with = ...)]` adapters that write nalgebra types as plain
//! nested JSON arrays.

pub mod matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Real;

    #[derive(Serialize, Deserialize)]
    struct Repr<T> {
        nrows: usize,
        ncols: usize,
        rows: Vec<Vec<T>>,
    }

    pub fn serialize<T: Real, S: Serializer>(m: &DMatrix<T>, s: S) -> Result<S::Ok, S::Error> {
        let rows = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        Repr {
            nrows: m.nrows(),
            ncols: m.ncols(),
            rows,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<DMatrix<T>, D::Error> {
        let repr = Repr::<T>::deserialize(d)?;
        if repr.rows.len() != repr.nrows || repr.rows.iter().any(|r| r.len() != repr.ncols) {
            return Err(serde::de::Error::custom(format!(
                "matrix payload does not match declared shape {}x{}",
                repr.nrows, repr.ncols
            )));
        }
        Ok(DMatrix::from_fn(repr.nrows, repr.ncols, |i, j| repr.rows[i][j]))
    }
}

pub mod vectors {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Real;

    pub fn serialize<T: Real, S: Serializer>(v: &[DVector<T>], s: S) -> Result<S::Ok, S::Error> {
        let plain: Vec<&[T]> = v.iter().map(|x| x.as_slice()).collect();
        plain.serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<T>>, D::Error> {
        let plain = Vec::<Vec<T>>::deserialize(d)?;
        Ok(plain.into_iter().map(DVector::from_vec).collect())
    }
}

pub mod complex_list {
    use num_complex::Complex;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Real;

    pub fn serialize<T: Real, S: Serializer>(v: &[Complex<T>], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[T; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex<T>>, D::Error> {
        let pairs = Vec::<[T; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex::new(re, im)).collect())
    }
}
