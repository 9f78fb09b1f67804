use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Desk-scale heads divide the published widths by this factor.
pub const DESK_DIVISOR: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Simclr,
    Moco,
    Byol,
    Simsiam,
    BarlowTwins,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Simclr,
        Method::Moco,
        Method::Byol,
        Method::Simsiam,
        Method::BarlowTwins,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Simclr => "simclr",
            Method::Moco => "moco",
            Method::Byol => "byol",
            Method::Simsiam => "simsiam",
            Method::BarlowTwins => "barlow_twins",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }

    /// Whether the method keeps a momentum (EMA) copy of the online network.
    pub fn uses_target_network(self) -> bool {
        matches!(self, Method::Moco | Method::Byol)
    }
}

/// Two-layer MLP head: `in → hidden (ReLU) → out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden: usize,
    pub out: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heads {
    pub projector: MlpSpec,
    #[serde(default)]
    pub predictor: Option<MlpSpec>,
}

impl Heads {
    /// Published head widths.
    pub fn published(method: Method) -> Heads {
        let mlp = |hidden, out| MlpSpec { hidden, out };
        match method {
            Method::Simclr => Heads {
                projector: mlp(4096, 512),
                predictor: None,
            },
            Method::Moco => Heads {
                projector: mlp(2048, 256),
                predictor: None,
            },
            Method::Byol => Heads {
                projector: mlp(4096, 256),
                predictor: Some(mlp(4096, 256)),
            },
            Method::Simsiam => Heads {
                projector: mlp(4096, 4096),
                predictor: Some(mlp(512, 4096)),
            },
            Method::BarlowTwins => Heads {
                projector: mlp(4096, 4096),
                predictor: None,
            },
        }
    }

    /// Published widths divided by [`DESK_DIVISOR`].
    pub fn desk(method: Method) -> Heads {
        let p = Heads::published(method);
        let shrink = |m: MlpSpec| MlpSpec {
            hidden: m.hidden / DESK_DIVISOR,
            out: m.out / DESK_DIVISOR,
        };
        Heads {
            projector: shrink(p.projector),
            predictor: p.predictor.map(shrink),
        }
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        let all = [Some(self.projector), self.predictor];
        if all.iter().flatten().any(|m| m.hidden == 0 || m.out == 0) {
            return Err(Error::Config("head widths must be positive".into()));
        }
        match (method, self.predictor) {
            (Method::Byol | Method::Simsiam, None) => {
                Err(Error::Config(format!("{} needs a predictor head", method.name())))
            }
            (Method::Byol | Method::Simsiam, Some(p)) if p.out != self.projector.out => {
                Err(Error::Config("predictor output must match projector output".into()))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_dims() {
        assert_eq!(Heads::desk(Method::Simclr).projector, MlpSpec { hidden: 256, out: 32 });
        assert_eq!(Heads::desk(Method::Moco).projector, MlpSpec { hidden: 128, out: 16 });
        assert_eq!(
            Heads::desk(Method::Simsiam).predictor,
            Some(MlpSpec { hidden: 32, out: 256 })
        );
        for m in Method::ALL {
            Heads::desk(m).validate(m).unwrap();
            Heads::published(m).validate(m).unwrap();
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
    }

    #[test]
    fn predictor_required() {
        let h = Heads::desk(Method::Simclr);
        assert!(h.validate(Method::Byol).is_err());
    }
}
