//! Small problems from the Hock–Schittkowski collection.

use super::{ModelOutputs, Scalar, SmoothModel};

macro_rules! model {
    ($name:ident, |$x:ident| $body:expr) => {
        pub struct $name;
        impl SmoothModel for $name {
            #[allow(unused_variables)]
            fn eval<D: Scalar>(&self, $x: &[D]) -> ModelOutputs<D> {
                $body
            }
        }
    };
}

fn c<D: Scalar>(v: f64) -> D {
    D::from(v)
}

fn out<D>(f: D, h: Vec<D>, g: Vec<D>) -> ModelOutputs<D> {
    ModelOutputs { f, h, g }
}

fn rosen<D: Scalar>(x1: D, x2: D) -> D {
    (x2 - x1 * x1).powi(2) * 100.0 + (c::<D>(1.0) - x1).powi(2)
}

model!(EqLine, |x| out(
    x[0] * x[0] + x[1] * x[1],
    vec![x[0] + x[1] - 1.0],
    vec![]
));

model!(Hs001, |x| out(rosen(x[0], x[1]), vec![], vec![x[1] + 1.5]));

model!(Hs006, |x| out(
    (c::<D>(1.0) - x[0]).powi(2),
    vec![(x[1] - x[0] * x[0]) * 10.0],
    vec![]
));

model!(Hs007, |x| out(
    (x[0] * x[0] + 1.0).ln() - x[1],
    vec![(x[0] * x[0] + 1.0).powi(2) + x[1] * x[1] - 4.0],
    vec![]
));

model!(Hs010, |x| out(
    x[0] - x[1],
    vec![],
    vec![x[0] * x[0] * -3.0 + x[0] * x[1] * 2.0 - x[1] * x[1] + 1.0]
));

model!(Hs011, |x| out(
    (x[0] - 5.0).powi(2) + x[1] * x[1] - 25.0,
    vec![],
    vec![x[1] - x[0] * x[0]]
));

model!(Hs012, |x| out(
    x[0] * x[0] * 0.5 + x[1] * x[1] - x[0] * x[1] - x[0] * 7.0 - x[1] * 7.0,
    vec![],
    vec![c::<D>(25.0) - x[0] * x[0] * 4.0 - x[1] * x[1]]
));

model!(Hs013, |x| out(
    (x[0] - 2.0).powi(2) + x[1] * x[1],
    vec![],
    vec![(c::<D>(1.0) - x[0]).powi(3) - x[1], x[0], x[1]]
));

model!(Hs014, |x| out(
    (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
    vec![x[0] - x[1] * 2.0 + 1.0],
    vec![c::<D>(1.0) - x[0] * x[0] * 0.25 - x[1] * x[1]]
));

model!(Hs015, |x| out(
    rosen(x[0], x[1]),
    vec![],
    vec![x[0] * x[1] - 1.0, x[0] + x[1] * x[1], c::<D>(0.5) - x[0]]
));

model!(Hs016, |x| out(
    rosen(x[0], x[1]),
    vec![],
    vec![
        x[0] + x[1] * x[1],
        x[0] * x[0] + x[1],
        x[0] + 0.5,
        c::<D>(0.5) - x[0],
        c::<D>(1.0) - x[1],
    ]
));

model!(Hs017, |x| out(
    rosen(x[0], x[1]),
    vec![],
    vec![
        x[1] * x[1] - x[0],
        x[0] * x[0] - x[1],
        x[0] + 0.5,
        c::<D>(0.5) - x[0],
        c::<D>(1.0) - x[1],
    ]
));

model!(Hs018, |x| out(
    x[0] * x[0] * 0.01 + x[1] * x[1],
    vec![],
    vec![
        x[0] * x[1] - 25.0,
        x[0] * x[0] + x[1] * x[1] - 25.0,
        x[0] - 2.0,
        c::<D>(50.0) - x[0],
        x[1],
        c::<D>(50.0) - x[1],
    ]
));

model!(Hs021, |x| out(
    x[0] * x[0] * 0.01 + x[1] * x[1] - 100.0,
    vec![],
    vec![
        x[0] * 10.0 - x[1] - 10.0,
        x[0] - 2.0,
        c::<D>(50.0) - x[0],
        x[1] + 50.0,
        c::<D>(50.0) - x[1],
    ]
));

model!(Hs022, |x| out(
    (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
    vec![],
    vec![c::<D>(2.0) - x[0] - x[1], x[1] - x[0] * x[0]]
));

model!(Hs023, |x| out(
    x[0] * x[0] + x[1] * x[1],
    vec![],
    vec![
        x[0] + x[1] - 1.0,
        x[0] * x[0] + x[1] * x[1] - 1.0,
        x[0] * x[0] * 9.0 + x[1] * x[1] - 9.0,
        x[0] * x[0] - x[1],
        x[1] * x[1] - x[0],
        x[0] + 50.0,
        c::<D>(50.0) - x[0],
        x[1] + 50.0,
        c::<D>(50.0) - x[1],
    ]
));

model!(Hs026, |x| out(
    (x[0] - x[1]).powi(2) + (x[1] - x[2]).powi(4),
    vec![(x[1] * x[1] + 1.0) * x[0] + x[2].powi(4) - 3.0],
    vec![]
));

model!(Hs028, |x| out(
    (x[0] + x[1]).powi(2) + (x[1] + x[2]).powi(2),
    vec![x[0] + x[1] * 2.0 + x[2] * 3.0 - 1.0],
    vec![]
));

model!(Hs035, |x| out(
    c::<D>(9.0) - x[0] * 8.0 - x[1] * 6.0 - x[2] * 4.0
        + x[0] * x[0] * 2.0
        + x[1] * x[1] * 2.0
        + x[2] * x[2]
        + x[0] * x[1] * 2.0
        + x[0] * x[2] * 2.0,
    vec![],
    vec![c::<D>(3.0) - x[0] - x[1] - x[2] * 2.0, x[0], x[1], x[2]]
));

model!(Hs039, |x| out(
    -x[0],
    vec![
        x[1] - x[0].powi(3) - x[2] * x[2],
        x[0] * x[0] - x[1] - x[3] * x[3],
    ],
    vec![]
));

model!(Hs040, |x| out(
    -(x[0] * x[1] * x[2] * x[3]),
    vec![
        x[0].powi(3) + x[1] * x[1] - 1.0,
        x[0] * x[0] * x[3] - x[2],
        x[3] * x[3] - x[1],
    ],
    vec![]
));

model!(Hs042, |x| out(
    (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2) + (x[2] - 3.0).powi(2) + (x[3] - 4.0).powi(2),
    vec![x[0] - 2.0, x[2] * x[2] + x[3] * x[3] - 2.0],
    vec![]
));

model!(Hs043, |x| out(
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2] * 2.0 + x[3] * x[3]
        - x[0] * 5.0
        - x[1] * 5.0
        - x[2] * 21.0
        + x[3] * 7.0,
    vec![],
    vec![
        c::<D>(8.0) - x[0] * x[0] - x[1] * x[1] - x[2] * x[2] - x[3] * x[3] - x[0] + x[1] - x[2]
            + x[3],
        c::<D>(10.0) - x[0] * x[0] - x[1] * x[1] * 2.0 - x[2] * x[2] - x[3] * x[3] * 2.0
            + x[0]
            + x[3],
        c::<D>(5.0) - x[0] * x[0] * 2.0 - x[1] * x[1] - x[2] * x[2] - x[0] * 2.0 + x[1] + x[3],
    ]
));

model!(Hs048, |x| out(
    (x[0] - 1.0).powi(2) + (x[1] - x[2]).powi(2) + (x[3] - x[4]).powi(2),
    vec![
        x[0] + x[1] + x[2] + x[3] + x[4] - 5.0,
        x[2] - (x[3] + x[4]) * 2.0 + 3.0,
    ],
    vec![]
));

model!(Hs051, |x| out(
    (x[0] - x[1]).powi(2) + (x[1] + x[2] - 2.0).powi(2) + (x[3] - 1.0).powi(2) + (x[4] - 1.0).powi(2),
    vec![x[0] + x[1] * 3.0 - 4.0, x[2] + x[3] - x[4] * 2.0, x[1] - x[4]],
    vec![]
));

model!(Hs052, |x| out(
    (x[0] * 4.0 - x[1]).powi(2) + (x[1] + x[2] - 2.0).powi(2) + (x[3] - 1.0).powi(2) + (x[4] - 1.0).powi(2),
    vec![x[0] + x[1] * 3.0, x[2] + x[3] - x[4] * 2.0, x[1] - x[4]],
    vec![]
));

model!(Hs060, |x| out(
    (x[0] - 1.0).powi(2) + (x[0] - x[1]).powi(2) + (x[1] - x[2]).powi(4),
    vec![x[0] * (x[1] * x[1] + 1.0) + x[2].powi(4) - 4.0 - 3.0 * 2f64.sqrt()],
    vec![
        x[0] + 10.0,
        c::<D>(10.0) - x[0],
        x[1] + 10.0,
        c::<D>(10.0) - x[1],
        x[2] + 10.0,
        c::<D>(10.0) - x[2],
    ]
));

model!(Hs063, |x| out(
    c::<D>(1000.0) - x[0] * x[0] - x[1] * x[1] * 2.0 - x[2] * x[2] - x[0] * x[1] - x[0] * x[2],
    vec![
        x[0] * 8.0 + x[1] * 14.0 + x[2] * 7.0 - 56.0,
        x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - 25.0,
    ],
    vec![x[0], x[1], x[2]]
));

model!(Hs065, |x| out(
    (x[0] - x[1]).powi(2) + (x[0] + x[1] - 10.0).powi(2) / 9.0 + (x[2] - 5.0).powi(2),
    vec![],
    vec![
        c::<D>(48.0) - x[0] * x[0] - x[1] * x[1] - x[2] * x[2],
        x[0] + 4.5,
        c::<D>(4.5) - x[0],
        x[1] + 4.5,
        c::<D>(4.5) - x[1],
        x[2] + 5.0,
        c::<D>(5.0) - x[2],
    ]
));

model!(Hs071, |x| out(
    x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2],
    vec![x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] - 40.0],
    vec![
        x[0] * x[1] * x[2] * x[3] - 25.0,
        x[0] - 1.0,
        c::<D>(5.0) - x[0],
        x[1] - 1.0,
        c::<D>(5.0) - x[1],
        x[2] - 1.0,
        c::<D>(5.0) - x[2],
        x[3] - 1.0,
        c::<D>(5.0) - x[3],
    ]
));

model!(Hs076, |x| out(
    x[0] * x[0] + x[1] * x[1] * 0.5 + x[2] * x[2] + x[3] * x[3] * 0.5 - x[0] * x[2] + x[2] * x[3]
        - x[0]
        - x[1] * 3.0
        + x[2]
        - x[3],
    vec![],
    vec![
        c::<D>(5.0) - x[0] - x[1] * 2.0 - x[2] - x[3],
        c::<D>(4.0) - x[0] * 3.0 - x[1] - x[2] * 2.0 + x[3],
        x[1] + x[2] * 4.0 - 1.5,
        x[0],
        x[1],
        x[2],
        x[3],
    ]
));

model!(Hs078, |x| out(
    x[0] * x[1] * x[2] * x[3] * x[4],
    vec![
        x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] + x[4] * x[4] - 10.0,
        x[1] * x[2] - x[3] * x[4] * 5.0,
        x[0].powi(3) + x[1].powi(3) + 1.0,
    ],
    vec![]
));

model!(Hs079, |x| out(
    (x[0] - 1.0).powi(2) + (x[0] - x[1]).powi(2) + (x[1] - x[2]).powi(2) + (x[2] - x[3]).powi(4)
        + (x[3] - x[4]).powi(4),
    vec![
        x[0] + x[1] * x[1] + x[2].powi(3) - 2.0 - 3.0 * 2f64.sqrt(),
        x[1] - x[2] * x[2] + x[3] + 2.0 - 2.0 * 2f64.sqrt(),
        x[0] * x[4] - 2.0,
    ],
    vec![]
));

model!(Hs100, |x| out(
    (x[0] - 10.0).powi(2) + (x[1] - 12.0).powi(2) * 5.0 + x[2].powi(4) + (x[3] - 11.0).powi(2) * 3.0
        + x[4].powi(6) * 10.0
        + x[5] * x[5] * 7.0
        + x[6].powi(4)
        - x[5] * x[6] * 4.0
        - x[5] * 10.0
        - x[6] * 8.0,
    vec![],
    vec![
        c::<D>(127.0) - x[0] * x[0] * 2.0 - x[1].powi(4) * 3.0 - x[2] - x[3] * x[3] * 4.0 - x[4] * 5.0,
        c::<D>(282.0) - x[0] * 7.0 - x[1] * 3.0 - x[2] * x[2] * 10.0 - x[3] + x[4],
        c::<D>(196.0) - x[0] * 23.0 - x[1] * x[1] - x[5] * x[5] * 6.0 + x[6] * 8.0,
        x[0] * x[0] * -4.0 - x[1] * x[1] + x[0] * x[1] * 3.0 - x[2] * x[2] * 2.0 - x[5] * 5.0
            + x[6] * 11.0,
    ]
));

/// `(id, f*, x*, start)` for every model above.
#[allow(clippy::excessive_precision)]
pub(super) const TABLE: &[(&str, f64, &[f64], &[f64])] = &[
    ("eqline", 0.5, &[0.5, 0.5], &[0.0, 0.0]),
    ("hs001", 0.0, &[1.0, 1.0], &[-2.0, 1.0]),
    ("hs006", 0.0, &[1.0, 1.0], &[-1.2, 1.0]),
    ("hs007", -1.7320508075688772935, &[0.0, 1.7320508075688772935], &[2.0, 2.0]),
    ("hs010", -1.0, &[0.0, 1.0], &[-10.0, 10.0]),
    (
        "hs011",
        -8.4984642231546773775,
        &[1.2347728250532969804, 1.5246639294900999511],
        &[4.9, 0.1],
    ),
    ("hs012", -30.0, &[2.0, 3.0], &[0.0, 0.0]),
    ("hs013", 1.0, &[1.0, 0.0], &[-2.0, -2.0]),
    (
        "hs014",
        1.3934649806893020523,
        &[0.82287565553229529525, 0.91143782776614764763],
        &[2.0, 2.0],
    ),
    ("hs015", 306.5, &[0.5, 2.0], &[-2.0, 1.0]),
    ("hs016", 0.25, &[0.5, 0.25], &[-2.0, 1.0]),
    ("hs017", 1.0, &[0.0, 0.0], &[-2.0, 1.0]),
    ("hs018", 5.0, &[15.81138830084189666, 1.581138830084189666], &[2.0, 2.0]),
    ("hs021", -99.96, &[2.0, 0.0], &[-1.0, -1.0]),
    ("hs022", 1.0, &[1.0, 1.0], &[2.0, 2.0]),
    ("hs023", 2.0, &[1.0, 1.0], &[3.0, 1.0]),
    ("hs026", 0.0, &[1.0, 1.0, 1.0], &[-2.6, 2.0, 2.0]),
    ("hs028", 0.0, &[0.5, -0.5, 0.5], &[-4.0, 1.0, 1.0]),
    (
        "hs035",
        1.0 / 9.0,
        &[4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0],
        &[0.5, 0.5, 0.5],
    ),
    ("hs039", -1.0, &[1.0, 1.0, 0.0, 0.0], &[2.0, 2.0, 2.0, 2.0]),
    (
        "hs040",
        -0.25,
        &[
            0.79370052598409973738,
            std::f64::consts::FRAC_1_SQRT_2,
            0.52973154717964763228,
            0.84089641525371454303,
        ],
        &[0.8, 0.8, 0.8, 0.8],
    ),
    (
        "hs042",
        13.857864376269049512,
        &[2.0, 2.0, 0.84852813742385702928, 1.131370849898476039],
        &[1.0, 1.0, 1.0, 1.0],
    ),
    ("hs043", -44.0, &[0.0, 1.0, 2.0, -1.0], &[0.0, 0.0, 0.0, 0.0]),
    ("hs048", 0.0, &[1.0; 5], &[3.0, 5.0, -3.0, 2.0, -2.0]),
    ("hs051", 0.0, &[1.0; 5], &[2.5, 0.5, 2.0, -1.0, 0.5]),
    (
        "hs052",
        5.3266475644699140401,
        &[
            -33.0 / 349.0,
            11.0 / 349.0,
            180.0 / 349.0,
            -158.0 / 349.0,
            11.0 / 349.0,
        ],
        &[2.0; 5],
    ),
    (
        "hs060",
        0.032568200255069838789,
        &[1.1048590197333165479, 1.1966741822882571365, 1.5352622603253261025],
        &[2.0, 2.0, 2.0],
    ),
    (
        "hs063",
        961.71517213005217173,
        &[3.5121213418747198662, 0.2169879415152230282, 3.5521711548270169536],
        &[2.0, 2.0, 2.0],
    ),
    (
        "hs065",
        0.95352885680478283633,
        &[3.6504617252130363292, 3.6504617252130363292, 4.6204175553200086169],
        &[-5.0, 5.0, 0.0],
    ),
    (
        "hs071",
        17.014017289156301551,
        &[1.0, 4.7429996372644171158, 3.8211499841848739282, 1.3794082931726724218],
        &[1.0, 5.0, 5.0, 1.0],
    ),
    (
        "hs076",
        -4.6818181818181818182,
        &[3.0 / 11.0, 23.0 / 11.0, 0.0, 6.0 / 11.0],
        &[0.5, 0.5, 0.5, 0.5],
    ),
    (
        "hs078",
        -2.9197004089636794177,
        &[
            -1.7171435703943822669,
            1.5957096901835544254,
            1.8272457529271945711,
            -0.76364307818413037534,
            -0.76364307818413037534,
        ],
        &[-2.0, 1.5, 2.0, -1.0, -1.0],
    ),
    (
        "hs079",
        0.078776820871056901365,
        &[
            1.1911274563110513595,
            1.3626031649617421461,
            1.472817931512087739,
            1.6350166191679927212,
            1.6790814361664075658,
        ],
        &[2.0; 5],
    ),
    (
        "hs100",
        680.63005737440214895,
        &[
            2.3304993728795699952,
            1.9513723728968889707,
            -0.47754139238887162785,
            4.3657262336558101548,
            -0.6244869705268174104,
            1.0381310186079583389,
            1.5942267116118684511,
        ],
        &[1.0, 2.0, 0.0, 4.0, 0.0, 1.0, 1.0],
    ),
];
