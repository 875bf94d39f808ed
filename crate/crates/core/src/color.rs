//! Opponent color space used for style statistics and domain classification.
//!
//! Channels are (intensity, red-green, yellow-blue), obtained from linear RGB
//! by an orthonormal transform, so Euclidean distances carry over unchanged
//! and the inverse is the transpose.

const S3: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
const S2: f64 = 0.707_106_781_186_547_5; // 1/sqrt(2)
const S6: f64 = 0.408_248_290_463_863; // 1/sqrt(6)

pub const RGB_TO_OPPONENT: [[f64; 3]; 3] = [
    [S3, S3, S3],
    [S2, -S2, 0.0],
    [S6, S6, -2.0 * S6],
];

#[inline]
pub fn rgb_to_opponent(rgb: [f64; 3]) -> [f64; 3] {
    let m = &RGB_TO_OPPONENT;
    [
        m[0][0] * rgb[0] + m[0][1] * rgb[1] + m[0][2] * rgb[2],
        m[1][0] * rgb[0] + m[1][1] * rgb[1] + m[1][2] * rgb[2],
        m[2][0] * rgb[0] + m[2][1] * rgb[1] + m[2][2] * rgb[2],
    ]
}

#[inline]
pub fn opponent_to_rgb(opp: [f64; 3]) -> [f64; 3] {
    let m = &RGB_TO_OPPONENT;
    [
        m[0][0] * opp[0] + m[1][0] * opp[1] + m[2][0] * opp[2],
        m[0][1] * opp[0] + m[1][1] * opp[1] + m[2][1] * opp[2],
        m[0][2] * opp[0] + m[1][2] * opp[1] + m[2][2] * opp[2],
    ]
}

/// Rec. 601 luma weights.
#[inline]
pub fn luminance(rgb: [f32; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_is_orthonormal() {
        let m = RGB_TO_OPPONENT;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12, "row {i}.{j} = {dot}");
            }
        }
    }

    #[test]
    fn round_trip() {
        let rgb = [0.2, 0.7, 0.31];
        let back = opponent_to_rgb(rgb_to_opponent(rgb));
        for c in 0..3 {
            assert!((back[c] - rgb[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn gray_has_no_chroma() {
        let o = rgb_to_opponent([0.5, 0.5, 0.5]);
        assert!(o[1].abs() < 1e-12 && o[2].abs() < 1e-12);
        assert!((o[0] - 0.5 * 3f64.sqrt()).abs() < 1e-12);
    }
}
