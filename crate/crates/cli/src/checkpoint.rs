//! Model checkpoints.
//!
//! ```text
//! "QCCK" 0x01 | tag:u8 (1 = qcnn, 2 = cnn) | descriptor: u32 fields
//!   qcnn: input_size filter1 stride1 filter2 stride2 depth padding dropout_ppm classes
//!   cnn:  input_size channels1 channels2 filter classes
//! | epoch:u32 | steps:u64 | eta:f64 alpha:f64 epsilon:f64
//! | count:u64 | count x f64 parameters | count x f64 squared-gradient averages
//! ```
//!
//! All values little-endian. The parameter order is [`Network::params`].

use std::path::Path;

use qcnn_core::data::ByteReader;
use qcnn_core::{Architecture, CnnArchitecture, Error, Network, QcnnArchitecture, Result, RmsProp};

const MAGIC: &[u8; 4] = b"QCCK";
const VERSION: u8 = 0x01;
const TAG_QCNN: u8 = 1;
const TAG_CNN: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub params: Vec<f64>,
    pub optimizer: RmsProp,
    pub epoch: u32,
}

impl Checkpoint {
    pub fn new(architecture: Architecture, network: &Network, optimizer: &RmsProp, epoch: u32) -> Self {
        Self {
            architecture,
            params: network.params(),
            optimizer: optimizer.clone(),
            epoch,
        }
    }

    /// Rebuilds the network with the stored parameters.
    pub fn network(&self) -> Result<Network> {
        let mut net = self.architecture.build()?;
        net.set_params(&self.params)?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let fields: Vec<u32> = match &self.architecture {
            Architecture::Qcnn(a) => {
                out.push(TAG_QCNN);
                vec![
                    a.input_size as u32,
                    a.filter1 as u32,
                    a.stride1 as u32,
                    a.filter2 as u32,
                    a.stride2 as u32,
                    a.depth as u32,
                    a.padding as u32,
                    (a.dropout * 1e6).round() as u32,
                    a.classes as u32,
                ]
            }
            Architecture::Cnn(a) => {
                out.push(TAG_CNN);
                vec![
                    a.input_size as u32,
                    a.channels1 as u32,
                    a.channels2 as u32,
                    a.filter as u32,
                    a.classes as u32,
                ]
            }
        };
        for f in fields {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.optimizer.step_count().to_le_bytes());
        for v in [self.optimizer.eta, self.optimizer.alpha, self.optimizer.epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in self.params.iter().chain(self.optimizer.sq_avg()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected \"QCCK\"".into(),
            });
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let architecture = match r.u8()? {
            TAG_QCNN => {
                let mut f = [0usize; 9];
                for v in &mut f {
                    *v = r.u32()? as usize;
                }
                Architecture::Qcnn(QcnnArchitecture {
                    input_size: f[0],
                    filter1: f[1],
                    stride1: f[2],
                    filter2: f[3],
                    stride2: f[4],
                    depth: f[5],
                    padding: f[6],
                    dropout: f[7] as f64 / 1e6,
                    classes: f[8],
                })
            }
            TAG_CNN => {
                let mut f = [0usize; 5];
                for v in &mut f {
                    *v = r.u32()? as usize;
                }
                Architecture::Cnn(CnnArchitecture {
                    input_size: f[0],
                    channels1: f[1],
                    channels2: f[2],
                    filter: f[3],
                    classes: f[4],
                })
            }
            tag => {
                return Err(Error::Format {
                    offset: 5,
                    message: format!("unknown model tag {tag}"),
                })
            }
        };
        let epoch = r.u32()?;
        let steps = r.u64()?;
        let (eta, alpha, epsilon) = (r.f64()?, r.f64()?, r.f64()?);
        let count_at = r.offset();
        let count = r.u64()?;
        let expected = architecture.build()?.param_count() as u64;
        if count != expected {
            return Err(Error::Format {
                offset: count_at,
                message: format!("descriptor implies {expected} parameters, header says {count}"),
            });
        }
        r.require(count * 16)?;
        let mut values = Vec::with_capacity(2 * count as usize);
        for _ in 0..2 * count {
            values.push(r.f64()?);
        }
        if r.remaining() != 0 {
            return Err(Error::Format {
                offset: r.offset(),
                message: format!("{} trailing bytes", r.remaining()),
            });
        }
        let sq_avg = values.split_off(count as usize);
        let optimizer = RmsProp::from_state(eta, alpha, epsilon, sq_avg, steps).map_err(|e| Error::Format {
            offset: count_at + 8 + count * 8,
            message: e.to_string(),
        })?;
        Ok(Self {
            architecture,
            params: values,
            optimizer,
            epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let arch = Architecture::Qcnn(QcnnArchitecture {
            input_size: 6,
            filter1: 2,
            stride1: 1,
            filter2: 2,
            stride2: 1,
            dropout: 0.3,
            ..QcnnArchitecture::reference()
        });
        let mut net = arch.build().unwrap();
        net.initialize(5);
        let mut opt = RmsProp::new(net.param_count());
        let mut p = net.params();
        let g: Vec<f64> = (0..p.len()).map(|i| (i as f64).sin()).collect();
        opt.step(&mut p, &g).unwrap();
        net.set_params(&p).unwrap();
        Checkpoint::new(arch, &net, &opt, 3)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::Format { offset: 5, .. })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
    }
}
