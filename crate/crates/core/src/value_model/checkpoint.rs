//! Binary ensemble checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "MQCK"
//! version      u32      1
//! kind         u8       0 = table, 1 = mlp
//! n_actions    u32
//! outputs      u32      outputs per action (1 scalar, L categorical)
//! table:  n_states u32
//! mlp:    activation u8 (0 relu, 1 tanh), n_sizes u32, sizes u32 × n_sizes
//! members      u32
//! per member:  n_params u64, params f64 × n_params
//! ```

use std::io::{Read, Write};

use super::{Activation, ActionValueTable, Ensemble, Estimator, MlpQNetwork};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MQCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub fn save_ensemble<S: Scalar, W: Write>(ensemble: &Ensemble<S>, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let first = ensemble.member(0);
    match first {
        Estimator::Table(t) => {
            w.write_all(&[0])?;
            put_u32(&mut w, t.n_actions())?;
            put_u32(&mut w, t.outputs_per_action())?;
            put_u32(&mut w, t.n_states())?;
        }
        Estimator::Mlp(m) => {
            w.write_all(&[1])?;
            put_u32(&mut w, m.n_actions())?;
            put_u32(&mut w, m.output_dim() / m.n_actions())?;
            w.write_all(&[match m.activation() {
                Activation::Relu => 0,
                Activation::Tanh => 1,
            }])?;
            put_u32(&mut w, m.layer_sizes().len())?;
            for &s in m.layer_sizes() {
                put_u32(&mut w, s)?;
            }
        }
    }
    put_u32(&mut w, ensemble.len())?;
    for member in ensemble.members() {
        let params = member.params();
        w.write_all(&(params.len() as u64).to_le_bytes())?;
        for p in params {
            w.write_all(&p.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_ensemble<S: Scalar, R: Read>(mut r: R) -> Result<Ensemble<S>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = get_u8(&mut r)?;
    let n_actions = get_u32(&mut r)?;
    let outputs = get_u32(&mut r)?;
    let template: Estimator<S> = match kind {
        0 => {
            let n_states = get_u32(&mut r)?;
            Estimator::Table(ActionValueTable::zeros_with_outputs(n_states, n_actions, outputs)?)
        }
        1 => {
            let activation = match get_u8(&mut r)? {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                other => return Err(Error::Checkpoint(format!("unknown activation {other}"))),
            };
            let n = get_u32(&mut r)?;
            let sizes = (0..n).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?;
            if sizes.last().copied() != Some(n_actions * outputs) {
                return Err(Error::Checkpoint("output layer does not match action count".into()));
            }
            Estimator::Mlp(MlpQNetwork::zeros(sizes, n_actions, activation)?)
        }
        other => return Err(Error::Checkpoint(format!("unknown model kind {other}"))),
    };
    let k = get_u32(&mut r)?;
    let mut members = Vec::with_capacity(k);
    for _ in 0..k {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let n = u64::from_le_bytes(b) as usize;
        let mut member = template.clone();
        if member.params().len() != n {
            return Err(Error::Checkpoint(format!(
                "member has {n} parameters, shape implies {}",
                member.params().len()
            )));
        }
        for p in member.params_mut() {
            r.read_exact(&mut b)?;
            *p = S::lit(f64::from_le_bytes(b));
        }
        members.push(member);
    }
    Ensemble::new(members)
}
