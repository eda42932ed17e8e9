/// Two-sample fixtures frozen from an independent reference implementation.
pub struct TFixture {
    pub a: &'static [f64],
    pub b: &'static [f64],
    pub student_t: f64,
    pub student_p: f64,
    pub welch_t: f64,
    pub welch_p: f64,
    pub welch_dof: f64,
}

pub const T_FIXTURES: [TFixture; 10] = [
    TFixture {
        a: &[2.1, 2.5, 2.3, 2.2],
        b: &[1.9, 2.0, 2.1, 2.0],
        student_t: 2.9054879908745583,
        student_p: 0.027139550489314605,
        welch_t: 2.905487990874558,
        welch_p: 0.040169427834484024,
        welch_dof: 4.303335919317303,
    },
    TFixture {
        a: &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
        b: &[2.0, 4.0, 9.0],
        student_t: 0.24184684657769387,
        student_p: 0.8133482890166902,
        welch_t: 0.2182178902359924,
        welch_p: 0.8416770185499142,
        welch_dof: 2.906745870290504,
    },
    TFixture {
        a: &[0.5001, 0.5299, 0.4726, 0.4109, 0.4545],
        b: &[0.2517, 0.462, 0.718, 0.3516, 0.3259],
        student_t: 0.6173763811045543,
        student_p: 0.5541482365601932,
        welch_t: 0.6173763811045544,
        welch_p: 0.566923472570895,
        welch_dof: 4.4916912627184296,
    },
    TFixture {
        a: &[0.549, 0.5357, 0.5105, 0.407, 0.4971],
        b: &[
            0.5891, 0.1812, 0.3585, 0.0698, 0.1921, 0.0817, 0.403, 0.1965,
        ],
        student_t: 2.898687724516907,
        student_p: 0.01447906718653799,
        welch_t: 3.561791106684185,
        welch_p: 0.006115180896134117,
        welch_dof: 8.987993434254347,
    },
    TFixture {
        a: &[0.5271, 0.5157, 0.4813],
        b: &[
            -0.0534, 0.3423, 0.4403, 0.4727, 0.144, 0.3544, 0.2543, 0.2882, 0.6622, 0.2885, 0.4435,
            0.6269,
        ],
        student_t: 1.302457423850262,
        student_p: 0.21536238989795245,
        welch_t: 2.6074086522123086,
        welch_p: 0.022784042920537387,
        welch_dof: 12.09658662261077,
    },
    TFixture {
        a: &[0.4416, 0.4888, 0.511, 0.5064, 0.3775, 0.5076],
        b: &[0.7218, 0.1406, 0.6219, 0.4739, 0.3217, 0.8501],
        student_t: -0.4523017021405597,
        student_p: 0.6607047987401953,
        welch_t: -0.45230170214055976,
        welch_p: 0.6686224572256544,
        welch_dof: 5.407723187513952,
    },
    TFixture {
        a: &[
            0.5762, 0.3801, 0.5075, 0.5577, 0.4811, 0.5683, 0.4933, 0.5667, 0.6439, 0.4324, 0.5203,
            0.4537, 0.5127, 0.3813, 0.4421, 0.4804, 0.5899, 0.6145, 0.3676, 0.4205,
        ],
        b: &[0.5794, 0.0515, 0.3574, 0.4305, 0.7014, 0.5879, 0.3846],
        student_t: 1.0458968233506631,
        student_p: 0.30561637700878463,
        welch_t: 0.7013512804642721,
        welch_p: 0.5069885153335967,
        welch_dof: 6.617673889316424,
    },
    TFixture {
        a: &[0.4631, 0.475, 0.6524, 0.4572],
        b: &[
            0.3893, 0.5205, 0.4258, 0.4105, 0.2272, 0.4477, 0.3613, 0.6832, 0.5806,
        ],
        student_t: 0.8441531952531082,
        student_p: 0.4165648016706571,
        welch_t: 0.9683088320656518,
        welch_p: 0.3605276693830648,
        welch_dof: 8.215852921014127,
    },
    TFixture {
        a: &[
            0.4976, 0.5668, 0.466, 0.6052, 0.4995, 0.5583, 0.3709, 0.5347, 0.3312, 0.2965,
        ],
        b: &[
            0.3891, 0.27, 0.4828, 0.899, 0.2837, 0.3252, 0.4911, 0.5486, 0.4147, 0.4088,
        ],
        student_t: 0.3218595502461259,
        student_p: 0.7512668887699574,
        welch_t: 0.3218595502461259,
        welch_p: 0.7521617384458912,
        welch_dof: 14.470153233140424,
    },
    TFixture {
        a: &[0.5702, 0.552, 0.3966, 0.4921, 0.5035, 0.3946, 0.526],
        b: &[0.2784, 0.6444, 0.4885],
        student_t: 0.266839986656898,
        student_p: 0.7963417895092101,
        welch_t: 0.18553450376784197,
        welch_p: 0.8681798921815593,
        welch_dof: 2.2554281509663454,
    },
];
