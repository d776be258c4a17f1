//! Online gradient gates for one mini-batch.
//!
//! All three gates return shares of `lr/m * (s - y)^T x` at scale `2^f`,
//! where `s` is the activation of the forward values `u = w x^T`:
//!
//! * `eval_v1`: `s = 1/2 + u/4`, one round.
//! * `eval_v2`: `s` is 0, `1/2 + u * 2^-k`, or 1 on the three segments, two rounds.
//! * `eval_ss`: `s = 1/2 + u/4` with two Beaver multiplications, two rounds.

use std::collections::HashSet;

use crate::dealer::{contract_c2, BundleId, LrKeyBundle, SegmentParams, SsTriples};
use crate::error::{Error, Result};
use crate::fss::mic_eval;
use crate::ring::{FixedPointConfig, RingMatrix};
use crate::sharing::{local_affine, reveal, reveal_many, trunc_shares, AffineProgram, Factor::*, PartyId, ShareMatrix};
use crate::transport::{Channel, MsgTag};

/// Public hyper-parameters of a gate evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateParams {
    pub cfg: FixedPointConfig,
    pub lr: f64,
    pub segment: SegmentParams,
}

/// One party's view of a batch: `x: m x n`, `y: m x 1`, `w: 1 x n`.
#[derive(Clone, Copy, Debug)]
pub struct BatchInput<'a> {
    pub x: &'a ShareMatrix,
    pub y: &'a ShareMatrix,
    pub w: &'a ShareMatrix,
}

impl BatchInput<'_> {
    fn dims(&self) -> Result<(usize, usize)> {
        let (m, n) = self.x.shape();
        if self.y.shape() != (m, 1) || self.w.shape() != (1, n) {
            return Err(Error::Shape(format!(
                "batch x {:?}, y {:?}, w {:?}",
                self.x.shape(),
                self.y.shape(),
                self.w.shape()
            )));
        }
        Ok((m, n))
    }
}

/// Intermediate shares of the segmented gate, exposed for testing.
#[derive(Clone, Debug)]
pub struct V2Trace {
    /// Truncated forward values, `1 x m`.
    pub u: ShareMatrix,
    /// Middle-segment indicator shares, `1 x m`.
    pub mid: ShareMatrix,
    /// Upper-segment indicator shares, `1 x m`.
    pub upper: ShareMatrix,
    pub gradient: ShareMatrix,
}

/// A party's side of the online phase. Preprocessing is single use.
pub struct Session<'c> {
    pub party: PartyId,
    pub channel: &'c mut Channel,
    used: HashSet<BundleId>,
}

impl<'c> Session<'c> {
    pub fn new(party: PartyId, channel: &'c mut Channel) -> Self {
        Session { party, channel, used: HashSet::new() }
    }

    fn claim(&mut self, id: BundleId, party: PartyId) -> Result<()> {
        if party != self.party {
            return Err(Error::WrongParty(party.bit()));
        }
        if !self.used.insert(id) {
            return Err(Error::BundleReused(id));
        }
        Ok(())
    }

    fn share(&self, m: &RingMatrix) -> ShareMatrix {
        ShareMatrix::new(self.party, m.clone())
    }

    /// Opens x', w', y' and forms shares of `w x^T` at scale `2^(2f)`.
    fn open_masked(
        &mut self,
        input: &BatchInput<'_>,
        b: &LrKeyBundle,
    ) -> Result<(RingMatrix, RingMatrix, RingMatrix, ShareMatrix)> {
        let (m, n) = input.dims()?;
        if (b.m, b.n) != (m, n) {
            return Err(Error::WrongBundle(format!("bundle is {}x{}, batch is {m}x{n}", b.m, b.n)));
        }
        let xm = input.x.sub(&self.share(&b.r1))?;
        let wm = input.w.sub(&self.share(&b.r2))?;
        let ym = input.y.sub(&self.share(&b.r3))?;
        let mut opened = reveal_many(&[&xm, &wm, &ym], self.channel, MsgTag::OpenMasked)?.into_iter();
        let (xp, wp, yp) = (opened.next().unwrap(), opened.next().unwrap(), opened.next().unwrap());

        // z = b w'x'^T + w' r1^T + r2 x'^T + c1
        let z = local_affine(
            self.party,
            &[&self.share(&b.r1), &self.share(&b.r2), &self.share(&b.c1)],
            &[&wp, &xp],
            &AffineProgram::new()
                .term(1, [Public(0), PublicT(1)])
                .term(1, [Public(0), ShareT(0)])
                .term(1, [Share(1), PublicT(1)])
                .term(1, [Share(2)]),
        )?;
        Ok((xp, wp, yp, z))
    }

    /// Shares of `y^T x` scaled by `coeff`, at scale `2^(2f)`.
    fn label_term(&self, b: &LrKeyBundle, xp: &RingMatrix, yp: &RingMatrix, coeff: i64) -> Result<ShareMatrix> {
        let ring = xp.ring();
        local_affine(
            self.party,
            &[&self.share(&b.r1), &self.share(&b.r3), &self.share(&b.c4)],
            &[xp, yp],
            &AffineProgram::new()
                .signed(ring, coeff, [PublicT(1), Public(0)])
                .signed(ring, coeff, [PublicT(1), Share(0)])
                .signed(ring, coeff, [ShareT(1), Public(0)])
                .signed(ring, coeff, [Share(2)]),
        )
    }

    /// Taylor gate, one round.
    pub fn eval_v1(&mut self, input: BatchInput<'_>, b: &LrKeyBundle, params: &GateParams) -> Result<ShareMatrix> {
        self.claim(b.id, b.party)?;
        let f = params.cfg.frac;
        let ring = params.cfg.ring();
        let (xp, wp, yp, z) = self.open_masked(&input, b)?;
        let m = xp.rows();

        // (w x^T) x at scale 2^(3f)
        let wx = wp.mat_mul(&xp.transpose())?;
        let c2x = contract_c2(&self.share(&b.c2), &xp)?;
        let p3 = local_affine(
            self.party,
            &[&z, &self.share(&b.r1), &self.share(&b.c5), &c2x, &self.share(&b.c3)],
            &[&xp, &wx, &wp],
            &AffineProgram::new()
                .term(1, [Share(0), Public(0)])
                .term(1, [Public(1), Share(1)])
                .term(1, [Public(2), Share(2)])
                .term(1, [Share(3)])
                .term(1, [Share(4)]),
        )?;

        // 2 * 1 x at scale 2^(2f)
        let ones = RingMatrix::filled(ring, 1, m, 1);
        let two_x = local_affine(
            self.party,
            &[&self.share(&b.r1)],
            &[&ones, &xp],
            &AffineProgram::new().term(1 << (f + 1), [Public(0), Public(1)]).term(1 << (f + 1), [Public(0), Share(0)]),
        )?;
        let p2 = two_x.add(&self.label_term(b, &xp, &yp, -4)?)?;
        let g4 = trunc_shares(&p3, f).add(&p2)?;
        Ok(apply_step(&g4, params, m, 2))
    }

    /// Segmented gate, two rounds.
    pub fn eval_v2(&mut self, input: BatchInput<'_>, b: &LrKeyBundle, params: &GateParams) -> Result<ShareMatrix> {
        Ok(self.eval_v2_traced(input, b, params)?.gradient)
    }

    pub fn eval_v2_traced(&mut self, input: BatchInput<'_>, b: &LrKeyBundle, params: &GateParams) -> Result<V2Trace> {
        let seg =
            b.segment.as_ref().ok_or_else(|| Error::WrongBundle(format!("{} carries no comparison keys", b.id)))?;
        self.claim(b.id, b.party)?;
        let cfg = params.cfg;
        let (f, ring) = (cfg.frac, cfg.ring());
        let k = seg.slope_log2;
        let (xp, _wp, yp, z) = self.open_masked(&input, b)?;
        let (m, n) = xp.shape();
        if seg.keys.len() != m {
            return Err(Error::WrongBundle(format!("{} keys for a batch of {m}", seg.keys.len())));
        }

        let u = trunc_shares(&z, f);
        let masked = u.add(&self.share(&seg.rho))?;
        let u_hat = reveal(&masked, self.channel, MsgTag::OpenForward)?;

        let c_half = 1u64 << (k - 1 + f);
        let c_full = 1u64 << (k + f);
        let mut g = vec![0u64; n];
        let mut mid = Vec::with_capacity(m);
        let mut upper = Vec::with_capacity(m);
        for j in 0..m {
            let uj = u_hat.get(0, j);
            let out = mic_eval(self.party, &seg.keys[j], uj)?;
            let (d2, d3) = (&out[0], &out[1]);
            if d2.len() != 2 * n + 2 || d3.len() != n + 1 {
                return Err(Error::WrongBundle("comparison payload width does not match the batch".into()));
            }
            mid.push(d2[0]);
            upper.push(d3[0]);
            let xj = xp.row(j);
            for i in 0..n {
                // shares of d2 * x_j[i], d3 * x_j[i], d2 * rho_j * x_j[i]
                let a2 = ring.add(ring.mul(d2[0], xj[i]), d2[2 + i]);
                let a3 = ring.add(ring.mul(d3[0], xj[i]), d3[1 + i]);
                let ar = ring.add(ring.mul(d2[1], xj[i]), d2[2 + n + i]);
                let t = ring.add(ring.mul(c_half, a2), ring.mul(c_full, a3));
                let t = ring.add(t, ring.mul(uj, a2));
                g[i] = ring.add(g[i], ring.sub(t, ar));
            }
        }
        let g = ShareMatrix::new(self.party, RingMatrix::from_vec(ring, 1, n, g)?);
        let g = g.add(&self.label_term(b, &xp, &yp, -(1i64 << k))?)?;
        Ok(V2Trace {
            u,
            mid: ShareMatrix::new(self.party, RingMatrix::from_vec(ring, 1, m, mid)?),
            upper: ShareMatrix::new(self.party, RingMatrix::from_vec(ring, 1, m, upper)?),
            gradient: apply_step(&g, params, m, k),
        })
    }

    /// Beaver-triple baseline, two rounds.
    pub fn eval_ss(&mut self, input: BatchInput<'_>, t: &SsTriples, params: &GateParams) -> Result<ShareMatrix> {
        self.claim(t.id, t.party)?;
        let (m, n) = input.dims()?;
        if (t.m, t.n) != (m, n) {
            return Err(Error::WrongBundle(format!("triples are {}x{}, batch is {m}x{n}", t.m, t.n)));
        }
        let cfg = params.cfg;
        let (f, ring) = (cfg.frac, cfg.ring());
        let fw = &t.forward;
        let bw = &t.backward;

        let e = input.x.sub(&self.share(&bw.b))?;
        let fm = input.w.sub(&self.share(&fw.a))?;
        let mut opened = reveal_many(&[&e, &fm], self.channel, MsgTag::BeaverForward)?.into_iter();
        let (e, fm) = (opened.next().unwrap(), opened.next().unwrap());

        // w x^T = (F + a)(E + A)^T
        let z = local_affine(
            self.party,
            &[&self.share(&fw.a), &self.share(&fw.b), &self.share(&fw.c)],
            &[&fm, &e],
            &AffineProgram::new()
                .term(1, [Public(0), PublicT(1)])
                .term(1, [Public(0), Share(1)])
                .term(1, [Share(0), PublicT(1)])
                .term(1, [Share(2)]),
        )?;
        let u = trunc_shares(&z, f);

        // 4 (s - y^T) = 2 + u - 4 y^T at scale 2^f
        let twos = RingMatrix::filled(ring, 1, m, 2u64 << f);
        let e4 = local_affine(
            self.party,
            &[&u, input.y],
            &[&twos],
            &AffineProgram::new().term(1, [Public(0)]).term(1, [Share(0)]).signed(ring, -4, [ShareT(1)]),
        )?;
        let dm = e4.sub(&self.share(&bw.a))?;
        let d = reveal(&dm, self.channel, MsgTag::BeaverBackward)?;

        let g4 = local_affine(
            self.party,
            &[&self.share(&bw.a), &self.share(&bw.b), &self.share(&bw.c)],
            &[&d, &e],
            &AffineProgram::new()
                .term(1, [Public(0), Public(1)])
                .term(1, [Public(0), Share(1)])
                .term(1, [Share(0), Public(1)])
                .term(1, [Share(2)]),
        )?;
        Ok(apply_step(&g4, params, m, 2))
    }
}

/// `lr / (2^shift * m) * g` for `g` at scale `2^(2f)`, returned at scale `2^f`.
fn apply_step(g: &ShareMatrix, params: &GateParams, m: usize, shift: u32) -> ShareMatrix {
    let f = params.cfg.frac;
    let c = params.cfg.encode_at(params.lr / ((1u64 << shift) as f64 * m as f64), 2 * f);
    trunc_shares(&trunc_shares(g, f).scale(c), 2 * f)
}
