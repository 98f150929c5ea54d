//! Element table: symbols, standard atomic weights and allowed valences.

/// A chemical element, identified by atomic number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(u8);

struct ElementInfo {
    symbol: &'static str,
    mass: f64,
}

macro_rules! table {
    ($(($sym:expr, $mass:expr)),* $(,)?) => {
        &[$(ElementInfo { symbol: $sym, mass: $mass }),*]
    };
}

// Index = atomic number - 1. Conventional standard atomic weights.
static ELEMENTS: &[ElementInfo] = table![
    ("H", 1.008), ("He", 4.003), ("Li", 6.941), ("Be", 9.012), ("B", 10.812),
    ("C", 12.011), ("N", 14.007), ("O", 15.999), ("F", 18.998), ("Ne", 20.180),
    ("Na", 22.990), ("Mg", 24.305), ("Al", 26.982), ("Si", 28.086), ("P", 30.974),
    ("S", 32.067), ("Cl", 35.453), ("Ar", 39.948), ("K", 39.098), ("Ca", 40.078),
    ("Sc", 44.956), ("Ti", 47.867), ("V", 50.942), ("Cr", 51.996), ("Mn", 54.938),
    ("Fe", 55.845), ("Co", 58.933), ("Ni", 58.693), ("Cu", 63.546), ("Zn", 65.390),
    ("Ga", 69.723), ("Ge", 72.610), ("As", 74.922), ("Se", 78.960), ("Br", 79.904),
    ("Kr", 83.800), ("Rb", 85.468), ("Sr", 87.620), ("Y", 88.906), ("Zr", 91.224),
    ("Nb", 92.906), ("Mo", 95.940), ("Tc", 98.000), ("Ru", 101.070), ("Rh", 102.906),
    ("Pd", 106.420), ("Ag", 107.868), ("Cd", 112.411), ("In", 114.818), ("Sn", 118.710),
    ("Sb", 121.760), ("Te", 127.600), ("I", 126.904), ("Xe", 131.290), ("Cs", 132.905),
    ("Ba", 137.328), ("La", 138.906), ("Ce", 140.116), ("Pr", 140.908), ("Nd", 144.240),
    ("Pm", 145.000), ("Sm", 150.360), ("Eu", 151.964), ("Gd", 157.250), ("Tb", 158.925),
    ("Dy", 162.500), ("Ho", 164.930), ("Er", 167.260), ("Tm", 168.934), ("Yb", 173.040),
    ("Lu", 174.967), ("Hf", 178.490), ("Ta", 180.948), ("W", 183.840), ("Re", 186.207),
    ("Os", 190.230), ("Ir", 192.217), ("Pt", 195.078), ("Au", 196.967), ("Hg", 200.590),
    ("Tl", 204.383), ("Pb", 207.200), ("Bi", 208.980), ("Po", 209.000), ("At", 210.000),
    ("Rn", 222.000),
];

impl Element {
    pub const H: Element = Element(1);
    pub const B: Element = Element(5);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);
    pub const F: Element = Element(9);
    pub const P: Element = Element(15);
    pub const S: Element = Element(16);
    pub const CL: Element = Element(17);
    pub const SE: Element = Element(34);
    pub const BR: Element = Element(35);
    pub const I: Element = Element(53);

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        (z >= 1 && (z as usize) <= ELEMENTS.len()).then_some(Element(z))
    }

    /// Looks up a properly capitalized element symbol ("Cl", not "CL").
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        ELEMENTS
            .iter()
            .position(|e| e.symbol == symbol)
            .map(|i| Element(i as u8 + 1))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        ELEMENTS[self.0 as usize - 1].symbol
    }

    pub fn mass(self) -> f64 {
        ELEMENTS[self.0 as usize - 1].mass
    }

    /// True for the elements that may appear outside brackets.
    pub fn is_organic_subset(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
    }

    /// True for elements that may be written in lowercase aromatic form.
    pub fn can_be_aromatic(self) -> bool {
        matches!(self.0, 5 | 6 | 7 | 8 | 15 | 16 | 33 | 34)
    }

    pub fn is_halogen(self) -> bool {
        matches!(self.0, 9 | 17 | 35 | 53)
    }

    /// Allowed valences of the neutral element, ascending. Empty for elements
    /// without a valence model (metals and the like), which are not checked.
    pub fn default_valences(self) -> &'static [u8] {
        match self.0 {
            1 => &[1],
            5 => &[3],
            6 => &[4],
            7 => &[3],
            15 => &[3, 5],
            8 => &[2],
            16 | 34 => &[2, 4, 6],
            9 | 17 | 35 | 53 => &[1],
            14 => &[4],
            33 => &[3, 5],
            _ => &[],
        }
    }

    /// Allowed valences after accounting for a formal charge.
    ///
    /// Electron-rich elements (N, O, S, P, halogens, ...) gain one bond per
    /// positive charge and lose one per negative charge; carbon loses one per
    /// unit of either sign; boron mirrors nitrogen.
    pub fn valences_with_charge(self, charge: i8) -> Vec<u8> {
        let base = self.default_valences();
        if charge == 0 || base.is_empty() {
            return base.to_vec();
        }
        let shift: i32 = match self.0 {
            6 | 14 => -(charge.unsigned_abs() as i32),
            5 => -(charge as i32),
            _ => charge as i32,
        };
        let mut out: Vec<u8> = base
            .iter()
            .map(|&v| v as i32 + shift)
            .filter(|&v| v >= 0)
            .map(|v| v as u8)
            .collect();
        out.dedup();
        out
    }
}

impl std::fmt::Display for Element {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_round_trip() {
        for z in 1..=86u8 {
            let e = Element::from_atomic_number(z).unwrap();
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
        }
        assert_eq!(Element::from_symbol("Xx"), None);
        assert_eq!(Element::from_atomic_number(0), None);
    }

    #[test]
    fn charge_adjusted_valences() {
        assert_eq!(Element::N.valences_with_charge(1), vec![4]);
        assert_eq!(Element::O.valences_with_charge(-1), vec![1]);
        assert_eq!(Element::C.valences_with_charge(-1), vec![3]);
        assert_eq!(Element::B.valences_with_charge(-1), vec![4]);
        assert_eq!(Element::F.valences_with_charge(-1), vec![0]);
    }
}
