//! Market instances, allocations, prices and equilibrium certification.
//!
//! Rates are utility per dollar: a buyer charged at rate `r` who receives
//! utility `f` spends `f / r` dollars. At equilibrium `f_i(x_i) = r_i * m_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::{kkt_residuals, KktResiduals};
use crate::utility::UtilityFn;

/// Column sums may exceed one by at most this much.
pub const SUPPLY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Buyer {
    pub money: f64,
    pub utility: UtilityFn,
}

impl Buyer {
    pub fn new(money: f64, utility: UtilityFn) -> Self {
        Buyer { money, utility }
    }
}

/// `goods` divisible goods with unit supply each, and a set of buyers.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    goods: usize,
    buyers: Vec<Buyer>,
}

impl Market {
    pub fn new(goods: usize, buyers: Vec<Buyer>) -> Result<Self> {
        if goods == 0 {
            return Err(Error::InvalidMarket("market needs at least one good".into()));
        }
        if buyers.is_empty() {
            return Err(Error::InvalidMarket("market needs at least one buyer".into()));
        }
        for (i, b) in buyers.iter().enumerate() {
            if !(b.money > 0.0 && b.money.is_finite()) {
                return Err(Error::InvalidMarket(format!(
                    "buyer {i} has non-positive money {}",
                    b.money
                )));
            }
            if b.utility.dim() != goods {
                return Err(Error::InvalidMarket(format!(
                    "buyer {i} utility has {} goods, market has {goods}",
                    b.utility.dim()
                )));
            }
        }
        Ok(Market { goods, buyers })
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn n_buyers(&self) -> usize {
        self.buyers.len()
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    pub fn buyer(&self, i: usize) -> &Buyer {
        &self.buyers[i]
    }

    pub fn moneys(&self) -> Vec<f64> {
        self.buyers.iter().map(|b| b.money).collect()
    }

    pub fn total_money(&self) -> f64 {
        self.buyers.iter().map(|b| b.money).sum()
    }

    /// Same utilities, new budgets.
    pub fn with_moneys(&self, moneys: &[f64]) -> Result<Market> {
        if moneys.len() != self.buyers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.buyers.len(),
                got: moneys.len(),
            });
        }
        let buyers = self
            .buyers
            .iter()
            .zip(moneys)
            .map(|(b, &m)| Buyer::new(m, b.utility.clone()))
            .collect();
        Market::new(self.goods, buyers)
    }

    /// Utility of every buyer under `x`.
    pub fn utilities(&self, x: &Allocation) -> Result<Vec<f64>> {
        self.check_allocation(x)?;
        self.buyers
            .iter()
            .enumerate()
            .map(|(i, b)| b.utility.eval(x.row(i)))
            .collect()
    }

    pub(crate) fn check_allocation(&self, x: &Allocation) -> Result<()> {
        if x.n_buyers() != self.n_buyers() {
            return Err(Error::DimensionMismatch {
                expected: self.n_buyers(),
                got: x.n_buyers(),
            });
        }
        if x.goods() != self.goods {
            return Err(Error::DimensionMismatch {
                expected: self.goods,
                got: x.goods(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_prices(&self, p: &PriceVector) -> Result<()> {
        if p.len() != self.goods {
            return Err(Error::DimensionMismatch {
                expected: self.goods,
                got: p.len(),
            });
        }
        Ok(())
    }
}

/// Row-major `n x g` matrix; `x[i][j]` is the amount of good `j` held by buyer `i`.
/// Serializes as a list of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    n: usize,
    g: usize,
    data: Vec<f64>,
}

impl Serialize for Allocation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.data.chunks(self.g.max(1)).take(self.n))
    }
}

impl Allocation {
    pub fn new(n: usize, g: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * g {
            return Err(Error::DimensionMismatch {
                expected: n * g,
                got: data.len(),
            });
        }
        let x = Allocation { n, g, data };
        if let Some(v) = x.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "allocation entries must be finite and >= 0 (got {v})"
            )));
        }
        for j in 0..g {
            let s = x.col_sum(j);
            if s > 1.0 + SUPPLY_SLACK {
                return Err(Error::InvalidParameter(format!(
                    "good {j} is over-allocated (column sum {s})"
                )));
            }
        }
        Ok(x)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let g = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != g) {
            return Err(Error::DimensionMismatch {
                expected: g,
                got: r.len(),
            });
        }
        Allocation::new(n, g, rows.concat())
    }

    /// No validation; callers guarantee feasibility.
    pub(crate) fn from_raw(n: usize, g: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * g);
        Allocation { n, g, data }
    }

    pub fn filled(n: usize, g: usize, value: f64) -> Result<Self> {
        Allocation::new(n, g, vec![value; n * g])
    }

    pub fn n_buyers(&self) -> usize {
        self.n
    }

    pub fn goods(&self) -> usize {
        self.g
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.g + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.g..(i + 1) * self.g]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.g).map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.data[i * self.g + j]).sum()
    }

    /// Lexicographic comparison over the row-major entries.
    pub fn lex_cmp(&self, other: &Allocation) -> std::cmp::Ordering {
        for (a, b) in self.data.iter().zip(&other.data) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        self.data.len().cmp(&other.data.len())
    }
}

/// Dollars per unit of each good.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceVector(pub Vec<f64>);

impl PriceVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "prices must be finite and >= 0 (got {v})"
            )));
        }
        Ok(PriceVector(p))
    }
}

impl std::ops::Deref for PriceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Utility per dollar for each buyer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateVector(pub Vec<f64>);

impl std::ops::Deref for RateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateInfo {
    /// Median of `(df/dx_ij) / p_j` over eligible goods.
    pub rate: f64,
    /// `(max - min) / rate` over the same ratios; zero at an exact equilibrium.
    pub spread: f64,
    pub eligible: usize,
}

/// Rate buyer `i` is charged at prices `p`, read off the marginal utilities
/// of goods it actually holds (`x_ij > tol`, `p_j > tol`). A buyer holding
/// no priced good gets `f_i / m_i`.
pub fn rate_of(m: &Market, x: &Allocation, p: &PriceVector, i: usize, tol: f64) -> Result<RateInfo> {
    m.check_allocation(x)?;
    m.check_prices(p)?;
    let xi = x.row(i);
    let grad = m.buyer(i).utility.partials(xi)?;
    let mut ratios: Vec<f64> = (0..m.goods())
        .filter(|&j| xi[j] > tol && p[j] > tol)
        .map(|j| grad[j] / p[j])
        .collect();
    if ratios.is_empty() {
        // holds nothing priced: the budget identity is the only constraint
        let b = m.buyer(i);
        let f = b.utility.eval(xi)?;
        if !(f > 0.0) {
            return Err(Error::RateUndefined {
                buyer: i,
                reason: "no good with positive allocation and positive price".into(),
            });
        }
        return Ok(RateInfo {
            rate: f / b.money,
            spread: 0.0,
            eligible: 0,
        });
    }
    if ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::RateUndefined {
            buyer: i,
            reason: "marginal utility diverges at the allocation".into(),
        });
    }
    ratios.sort_by(f64::total_cmp);
    let k = ratios.len();
    let rate = if k % 2 == 1 {
        ratios[k / 2]
    } else {
        0.5 * (ratios[k / 2 - 1] + ratios[k / 2])
    };
    Ok(RateInfo {
        rate,
        spread: (ratios[k - 1] - ratios[0]) / rate,
        eligible: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCertificate {
    pub prices: PriceVector,
    pub rates: RateVector,
    pub rate_spreads: Vec<f64>,
    pub utilities: Vec<f64>,
    /// Dollars each buyer pays: `min(m_i, f_i / r_i)`.
    pub spend: Vec<f64>,
    pub kkt_residuals: KktResiduals,
    pub tol: f64,
    /// Goods with positive price are sold out; worst shortfall `1 - sum_i x_ij`.
    pub cond1_ok: bool,
    pub cond1_worst: f64,
    /// Each buyer spends its money; worst `|f_i/r_i - m_i| / max(m_i, 1)`.
    pub cond2_ok: bool,
    pub cond2_worst: f64,
    /// Nothing held is sold at a loss (`p_j - (df_i/dx_ij) / r_i` over goods
    /// with `x_ij > tol`) and no unheld good is a better deal than the rate
    /// (`(df_i/dx_ij) / r_i - p_j` over all goods); worst of the two.
    pub cond3_pointwise_ok: bool,
    pub cond3_worst: f64,
    /// All held goods give the same bang per buck; worst relative spread.
    pub rates_consistent_ok: bool,
    pub middleman_profit: f64,
    pub seller_revenue: f64,
}

impl EquilibriumCertificate {
    pub fn passed(&self) -> bool {
        self.cond1_ok && self.cond2_ok && self.cond3_pointwise_ok && self.rates_consistent_ok
    }
}

fn seller_revenue(x: &Allocation, p: &PriceVector) -> f64 {
    (0..x.goods()).map(|j| p[j] * x.col_sum(j)).sum()
}

/// Checks the three equilibrium conditions for `(x, p)` at tolerance `tol`.
pub fn verify_equilibrium(
    m: &Market,
    x: &Allocation,
    p: &PriceVector,
    tol: f64,
) -> Result<EquilibriumCertificate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be > 0".into()));
    }
    m.check_allocation(x)?;
    m.check_prices(p)?;
    let n = m.n_buyers();

    let mut utilities = Vec::with_capacity(n);
    let mut rates = Vec::with_capacity(n);
    let mut spreads = Vec::with_capacity(n);
    let mut spend = Vec::with_capacity(n);
    let mut cond2_worst = 0.0f64;
    let mut cond3_worst = f64::NEG_INFINITY;

    for (i, b) in m.buyers().iter().enumerate() {
        let f = b.utility.eval(x.row(i))?;
        if !(f > 0.0) {
            return Err(Error::RateUndefined {
                buyer: i,
                reason: "zero utility at the allocation".into(),
            });
        }
        let info = rate_of(m, x, p, i, tol)?;
        let implied = f / info.rate;
        cond2_worst = cond2_worst.max((implied - b.money).abs() / b.money.max(1.0));
        let grad = b.utility.partials(x.row(i))?;
        for j in 0..m.goods() {
            let marginal = grad[j] / info.rate;
            cond3_worst = cond3_worst.max(marginal - p[j]);
            if x.get(i, j) > tol {
                cond3_worst = cond3_worst.max(p[j] - marginal);
            }
        }
        utilities.push(f);
        rates.push(info.rate);
        spreads.push(info.spread);
        spend.push(b.money.min(implied));
    }

    let mut cond1_worst = 0.0f64;
    for j in 0..m.goods() {
        if p[j] > tol {
            cond1_worst = cond1_worst.max(1.0 - x.col_sum(j));
        }
    }

    let revenue = seller_revenue(x, p);
    let profit = spend.iter().sum::<f64>() - revenue;
    let kkt = kkt_residuals(m, x, p, tol)?;
    let max_spread = spreads.iter().copied().fold(0.0, f64::max);

    Ok(EquilibriumCertificate {
        prices: p.clone(),
        rates: RateVector(rates),
        rate_spreads: spreads,
        utilities,
        spend,
        kkt_residuals: kkt,
        tol,
        cond1_ok: cond1_worst <= tol,
        cond1_worst,
        cond2_ok: cond2_worst <= tol,
        cond2_worst,
        cond3_pointwise_ok: cond3_worst <= tol,
        cond3_worst,
        rates_consistent_ok: max_spread <= tol,
        middleman_profit: profit,
        seller_revenue: revenue,
    })
}

/// Revenue collected from buyers minus what the seller is paid.
pub fn middleman_profit(m: &Market, x: &Allocation, p: &PriceVector, tol: f64) -> Result<f64> {
    m.check_allocation(x)?;
    m.check_prices(p)?;
    let mut collected = 0.0;
    for (i, b) in m.buyers().iter().enumerate() {
        let f = b.utility.eval(x.row(i))?;
        if !(f > 0.0) {
            return Err(Error::RateUndefined {
                buyer: i,
                reason: "zero utility at the allocation".into(),
            });
        }
        let r = rate_of(m, x, p, i, tol)?.rate;
        collected += b.money.min(f / r);
    }
    Ok(collected - seller_revenue(x, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(money: f64, f: UtilityFn) -> Market {
        let g = f.dim();
        Market::new(g, vec![Buyer::new(money, f)]).unwrap()
    }

    #[test]
    fn single_linear_buyer_equilibrium() {
        let m = single(1.0, UtilityFn::linear(vec![1.0]).unwrap());
        let x = Allocation::from_rows(&[vec![1.0]]).unwrap();
        let p = PriceVector::new(vec![1.0]).unwrap();
        let c = verify_equilibrium(&m, &x, &p, 1e-9).unwrap();
        assert!(c.passed());
        assert_eq!(c.middleman_profit, 0.0);
        assert_eq!(c.rates.0, vec![1.0]);
    }

    #[test]
    fn overpriced_good_breaks_budget() {
        let m = single(1.0, UtilityFn::linear(vec![1.0]).unwrap());
        let x = Allocation::from_rows(&[vec![1.0]]).unwrap();
        let p = PriceVector::new(vec![2.0]).unwrap();
        let c = verify_equilibrium(&m, &x, &p, 1e-9).unwrap();
        assert!(!c.cond2_ok);
        // implied spend f / r = 1 / 0.5 = 2
        assert!((c.cond2_worst - 1.0).abs() < 1e-15);
        assert!(!c.passed());
    }

    #[test]
    fn cobb_douglas_profit() {
        let m = single(2.0, UtilityFn::cobb_douglas(vec![0.25, 0.25]).unwrap());
        let x = Allocation::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let p = PriceVector::new(vec![0.5, 0.5]).unwrap();
        let c = verify_equilibrium(&m, &x, &p, 1e-9).unwrap();
        assert!(c.passed(), "{c:?}");
        assert!((c.middleman_profit - 1.0).abs() < 1e-12);
        assert!((c.seller_revenue - 1.0).abs() < 1e-12);
        assert!((middleman_profit(&m, &x, &p, 1e-9).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        let cd = single(1.0, UtilityFn::cobb_douglas(vec![0.5, 0.5]).unwrap());
        let x = Allocation::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let r = rate_of(&cd, &x, &PriceVector(vec![1.0, 1.0]), 0, 1e-9).unwrap();
        assert!((r.rate - 0.5).abs() < 1e-15 && r.spread.abs() < 1e-15);

        let lin = single(1.0, UtilityFn::linear(vec![2.0, 3.0]).unwrap());
        let r = rate_of(&lin, &x, &PriceVector(vec![2.0, 3.0]), 0, 1e-9).unwrap();
        assert_eq!((r.rate, r.spread), (1.0, 0.0));
        let r = rate_of(&lin, &x, &PriceVector(vec![1.0, 1.0]), 0, 1e-9).unwrap();
        assert_eq!((r.rate, r.spread), (2.5, 0.4));
    }

    #[test]
    fn empty_allocation_has_no_rate() {
        let m = single(1.0, UtilityFn::linear(vec![1.0, 1.0]).unwrap());
        let x = Allocation::filled(1, 2, 0.0).unwrap();
        let p = PriceVector(vec![1.0, 1.0]);
        assert!(matches!(
            middleman_profit(&m, &x, &p, 1e-9),
            Err(Error::RateUndefined { buyer: 0, .. })
        ));
        assert!(matches!(
            rate_of(&m, &x, &p, 0, 1e-9),
            Err(Error::RateUndefined { .. })
        ));
    }

    #[test]
    fn buyer_holding_nothing_is_rated_by_budget() {
        let m = Market::new(
            1,
            vec![
                Buyer::new(1.0, UtilityFn::expr("1 + x1", 1).unwrap()),
                Buyer::new(1.0, UtilityFn::linear(vec![4.0]).unwrap()),
            ],
        )
        .unwrap();
        let x = Allocation::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let p = PriceVector::new(vec![1.0]).unwrap();
        let r = rate_of(&m, &x, &p, 0, 1e-9).unwrap();
        assert_eq!((r.rate, r.eligible), (1.0, 0));
        // (m/f) df = 1 <= p, so staying out is an equilibrium
        assert!(verify_equilibrium(&m, &x, &p, 1e-9).unwrap().passed());
        let cheap = PriceVector::new(vec![0.5]).unwrap();
        assert!(!verify_equilibrium(&m, &x, &cheap, 1e-9).unwrap().passed());
    }

    #[test]
    fn allocation_validation() {
        assert!(Allocation::from_rows(&[vec![0.6], vec![0.6]]).is_err());
        assert!(Allocation::from_rows(&[vec![-0.1]]).is_err());
        assert!(Allocation::from_rows(&[vec![0.5, 0.5], vec![0.5]]).is_err());
        assert!(Allocation::from_rows(&[vec![0.5], vec![0.5 + 1e-10]]).is_ok());
    }

    #[test]
    fn market_validation() {
        let f = UtilityFn::linear(vec![1.0]).unwrap();
        assert!(Market::new(1, vec![]).is_err());
        assert!(Market::new(1, vec![Buyer::new(0.0, f.clone())]).is_err());
        assert!(Market::new(2, vec![Buyer::new(1.0, f)]).is_err());
    }

    #[test]
    fn unheld_goods_only_need_to_be_no_better_deal() {
        let m = Market::new(
            2,
            vec![
                Buyer::new(1.0, UtilityFn::linear(vec![1.0, 0.5]).unwrap()),
                Buyer::new(1.0, UtilityFn::linear(vec![0.5, 1.0]).unwrap()),
            ],
        )
        .unwrap();
        let x = Allocation::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = verify_equilibrium(&m, &x, &PriceVector(vec![1.0, 1.0]), 1e-9).unwrap();
        assert!(c.passed(), "{c:?}");
        // good 2 at 0.4 gives buyer 1 a rate of 1.25 > 1
        let c = verify_equilibrium(&m, &x, &PriceVector(vec![1.0, 0.4]), 1e-9).unwrap();
        assert!(!c.cond3_pointwise_ok);
        assert!((c.cond3_worst - 0.1).abs() < 1e-12);
    }
}
