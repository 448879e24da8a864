//! Built-in published designs and the dropout mechanisms they were built
//! for. Each string is one subject, listed left to right as printed.

use crate::design::ExactDesign;
use crate::dropout::DropoutMechanism;
use crate::error::{Error, Result};
use crate::sequence::TreatmentSequence;

pub const FIXTURE_NAMES: [&str; 5] = ["d2", "d4", "d6", "d8", "d9"];

#[derive(Clone, Debug)]
pub struct Fixture {
    pub design: ExactDesign,
    pub mechanism: DropoutMechanism,
}

const D2: [&str; 16] = [
    "2433", "1422", "2311", "3411", "3122", "4133", "3244", "2144", "1234", "1234", "1342", "2413",
    "4321", "4321", "4213", "3142",
];

const D4_ONCE: [&str; 12] = [
    "2344", "2433", "2311", "3411", "4322", "4211", "2314", "3412", "3421", "4213", "4231", "3241",
];
const D4_TWICE: [&str; 6] = ["3122", "4133", "2144", "1243", "1432", "1324"];

const D6: [&str; 20] = [
    "12344", "25411", "41355", "42533", "31522", "23451", "12435", "23514", "15324", "14325",
    "34152", "25134", "45132", "54213", "54213", "52143", "53241", "31245", "43521", "31452",
];

const D8: [&str; 6] = ["13221", "23112", "32113", "31223", "12332", "21331"];

fn build(name: &str, t: usize, counts: &[(&str, usize)]) -> Result<ExactDesign> {
    let pairs = counts
        .iter()
        .map(|(s, c)| Ok((TreatmentSequence::parse(s, t)?, *c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExactDesign::from_counts(t, &pairs)?.with_name(name))
}

pub fn fixture(name: &str) -> Result<Fixture> {
    let once = |list: &[&'static str]| list.iter().map(|s| (*s, 1)).collect::<Vec<_>>();
    let (design, mechanism) = match name {
        "d2" => (
            build(name, 4, &once(&D2))?,
            DropoutMechanism::new(4, 16, vec![0.0, 0.0, 0.5, 0.5])?,
        ),
        "d4" => {
            let mut counts = once(&D4_ONCE);
            counts.extend(D4_TWICE.iter().map(|s| (*s, 2)));
            (
                build(name, 4, &counts)?,
                DropoutMechanism::new(4, 24, vec![0.0, 0.1, 0.4, 0.5])?,
            )
        }
        "d6" => (
            build(name, 5, &once(&D6))?,
            DropoutMechanism::new(5, 20, vec![0.0, 0.05, 0.15, 0.2, 0.6])?,
        ),
        "d8" => {
            let counts: Vec<_> = D8.iter().map(|s| (*s, 5)).collect();
            let third = 1.0 / 3.0;
            (
                build(name, 3, &counts)?,
                DropoutMechanism::new(5, 30, vec![0.0, 0.0, third, third, third])?,
            )
        }
        "d9" => (
            build(
                name,
                2,
                &[("122121", 1), ("211212", 1), ("122211", 6), ("211122", 6)],
            )?,
            DropoutMechanism::new(6, 14, vec![0.0, 0.0, 0.0, 0.0, 0.4, 0.6])?,
        ),
        _ => {
            return Err(Error::invalid(format!(
                "unknown fixture {name:?}; available: {}",
                FIXTURE_NAMES.join(", ")
            )))
        }
    };
    Ok(Fixture { design, mechanism })
}
