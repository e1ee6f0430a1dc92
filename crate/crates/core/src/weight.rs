//! The lifted rationals: exact rational numbers extended with an undefined
//! value `⊥` that absorbs arithmetic and sits below every rational.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::FormatError;

/// A value of the weight domain: either `⊥` or an exact rational.
///
/// `BigRational` keeps its fraction reduced with a positive denominator, so
/// the reduced-form invariant holds after every operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Weight {
    Bot,
    Val(BigRational),
}

impl Weight {
    pub fn zero() -> Self {
        Weight::Val(BigRational::zero())
    }

    pub fn one() -> Self {
        Weight::Val(BigRational::one())
    }

    pub fn int(n: i64) -> Self {
        Weight::Val(BigRational::from_integer(BigInt::from(n)))
    }

    /// `num / den`; a zero denominator yields `⊥`.
    pub fn ratio(num: i64, den: i64) -> Self {
        if den == 0 {
            return Weight::Bot;
        }
        Weight::Val(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, Weight::Bot)
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Weight::Bot => None,
            Weight::Val(r) => Some(r),
        }
    }

    pub fn add(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Val(a), Weight::Val(b)) => Weight::Val(a + b),
            _ => Weight::Bot,
        }
    }

    pub fn sub(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Val(a), Weight::Val(b)) => Weight::Val(a - b),
            _ => Weight::Bot,
        }
    }

    pub fn mul(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Val(a), Weight::Val(b)) => Weight::Val(a * b),
            _ => Weight::Bot,
        }
    }

    /// Division never fails: a `⊥` operand or a zero divisor gives `⊥`.
    pub fn div(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Val(a), Weight::Val(b)) if !b.is_zero() => Weight::Val(a / b),
            _ => Weight::Bot,
        }
    }

    /// The extended order: `⊥ ≤ x` for every `x`, rationals compared exactly.
    pub fn leq(&self, other: &Weight) -> bool {
        match (self, other) {
            (Weight::Bot, _) => true,
            (Weight::Val(_), Weight::Bot) => false,
            (Weight::Val(a), Weight::Val(b)) => a <= b,
        }
    }

    /// Bit size `‖p‖ + ‖q‖` of the reduced fraction; `⊥` has size 0.
    pub fn bit_size(&self) -> u64 {
        match self {
            Weight::Bot => 0,
            Weight::Val(r) => r.numer().bits() + r.denom().bits(),
        }
    }
}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Weight::Bot, Weight::Bot) => Ordering::Equal,
            (Weight::Bot, Weight::Val(_)) => Ordering::Less,
            (Weight::Val(_), Weight::Bot) => Ordering::Greater,
            (Weight::Val(a), Weight::Val(b)) => a.cmp(b),
        }
    }
}

impl From<BigRational> for Weight {
    fn from(r: BigRational) -> Self {
        Weight::Val(r)
    }
}

impl From<i64> for Weight {
    fn from(n: i64) -> Self {
        Weight::int(n)
    }
}

/// Serialized as `bot`, an integer `p`, or a fraction `p/q`.
impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Bot => write!(f, "bot"),
            Weight::Val(r) => write_rational(f, r),
        }
    }
}

pub(crate) fn write_rational(f: &mut impl fmt::Write, r: &BigRational) -> fmt::Result {
    if r.denom().is_one() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

impl FromStr for Weight {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "bot" {
            return Ok(Weight::Bot);
        }
        parse_rational(s).map(Weight::Val)
    }
}

/// Parses `p` or `p/q` with a nonzero `q`. No decimals, no exponents.
pub fn parse_rational(s: &str) -> Result<BigRational, FormatError> {
    let bad = || FormatError::BadNumber(s.to_string());
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(num, den))
}

/// Parses a comma-separated list of rationals, e.g. `"1/2,3,-4"`.
pub fn parse_rational_list(s: &str) -> Result<Vec<BigRational>, FormatError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|part| parse_rational(part.trim())).collect()
}

pub fn rational_to_string(r: &BigRational) -> String {
    let mut s = String::new();
    write_rational(&mut s, r).expect("writing to a String cannot fail");
    s
}

pub(crate) fn abs_numer(r: &BigRational) -> BigInt {
    r.numer().abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_integer::Integer;
    use proptest::prelude::*;

    fn w(s: &str) -> Weight {
        s.parse().unwrap()
    }

    #[test]
    fn addition_examples() {
        assert_eq!(w("1/2").add(&w("1/3")), w("5/6"));
        assert_eq!(Weight::Bot.add(&w("7")), Weight::Bot);
        assert_eq!(w("0").add(&w("0")), w("0"));
    }

    #[test]
    fn division_examples() {
        assert_eq!(w("5").div(&w("0")), Weight::Bot);
        assert_eq!(w("3/4").div(&w("3/4")), w("1"));
        assert_eq!(Weight::Bot.div(&w("2")), Weight::Bot);
    }

    #[test]
    fn order_examples() {
        assert!(Weight::Bot.leq(&w("-5")));
        assert!(!w("-5").leq(&Weight::Bot));
        assert!(Weight::Bot.leq(&Weight::Bot));
    }

    #[test]
    fn text_form() {
        assert_eq!(w("6/4").to_string(), "3/2");
        assert_eq!(w("-8/4").to_string(), "-2");
        assert_eq!(Weight::Bot.to_string(), "bot");
        assert!("1/0".parse::<Weight>().is_err());
        assert!("0.5".parse::<Weight>().is_err());
    }

    fn arb_weight() -> impl Strategy<Value = Weight> {
        prop_oneof![
            1 => Just(Weight::Bot),
            6 => (-50i64..50, 1i64..20).prop_map(|(n, d)| Weight::ratio(n, d)),
        ]
    }

    fn reduced(x: &Weight) -> bool {
        match x {
            Weight::Bot => true,
            Weight::Val(r) => r.numer().gcd(r.denom()).is_one() && r.denom().is_positive(),
        }
    }

    proptest! {
        #[test]
        fn bot_absorbs(a in arb_weight()) {
            for op in [Weight::add, Weight::sub, Weight::mul, Weight::div] {
                prop_assert_eq!(op(&Weight::Bot, &a), Weight::Bot);
                prop_assert_eq!(op(&a, &Weight::Bot), Weight::Bot);
            }
        }

        #[test]
        fn order_total_and_antisymmetric(a in arb_weight(), b in arb_weight(), c in arb_weight()) {
            prop_assert!(a.leq(&b) || b.leq(&a));
            if a.leq(&b) && b.leq(&a) {
                prop_assert_eq!(&a, &b);
            }
            if a.leq(&b) && b.leq(&c) {
                prop_assert!(a.leq(&c));
            }
        }

        #[test]
        fn chains_stay_reduced(xs in proptest::collection::vec(arb_weight(), 1..8)) {
            let mut acc = Weight::one();
            for (i, x) in xs.iter().enumerate() {
                acc = match i % 4 {
                    0 => acc.add(x),
                    1 => acc.mul(x),
                    2 => acc.sub(x),
                    _ => acc.div(x),
                };
                prop_assert!(reduced(&acc));
            }
        }

        #[test]
        fn display_parse_roundtrip(a in arb_weight()) {
            prop_assert_eq!(a.to_string().parse::<Weight>().unwrap(), a);
        }
    }
}
