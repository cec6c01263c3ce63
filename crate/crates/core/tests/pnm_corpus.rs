use std::path::PathBuf;

use lensless::dataio::{read_image, write_image, BitDepth};
use lensless::{Error, Tensor};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/malformed")
}

/// (file, byte offset of the reported error, message fragment)
const CASES: &[(&str, usize, &str)] = &[
    ("bad_magic.pgm", 0, "bad magic"),
    ("empty.pgm", 0, "bad magic"),
    ("magic_only.pgm", 2, "width"),
    ("missing_height.pgm", 4, "height"),
    ("missing_maxval.pgm", 7, "maximum level"),
    ("maxval_zero.pgm", 7, "unsupported maximum level 0"),
    ("maxval_too_large.pgm", 7, "unsupported maximum level 70000"),
    ("non_numeric_width.pgm", 3, "expected width"),
    ("negative_width.pgm", 3, "expected width"),
    ("zero_width.pgm", 3, "width must be positive"),
    ("truncated_payload.pgm", 11, "expected 16 bytes of pixel data, found 10"),
    ("trailing_bytes.pgm", 27, "4 unexpected bytes"),
    ("sample_above_maxval.pgm", 13, "sample 200 exceeds"),
    ("truncated_16bit.pgm", 13, "expected 8 bytes of pixel data, found 7"),
    ("truncated_rgb.ppm", 11, "expected 12 bytes of pixel data, found 11"),
    ("huge_dimensions.pgm", 29, "expected 16000000000000000000 bytes"),
    ("no_space_after_maxval.pgm", 10, "header ends before pixel data"),
    ("unterminated_comment.pgm", 24, "header ends before width"),
];

#[test]
fn every_corpus_file_is_a_positioned_parse_error() {
    let listed = std::fs::read_dir(corpus()).unwrap().count();
    assert_eq!(listed, CASES.len());
    for &(name, want_offset, fragment) in CASES {
        match read_image(&corpus().join(name)) {
            Err(Error::Parse { offset, message, source_name }) => {
                assert_eq!(offset, want_offset, "{name}: {message}");
                assert!(message.contains(fragment), "{name}: {message}");
                assert!(source_name.ends_with(name));
            }
            other => panic!("{name}: {other:?}"),
        }
    }
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(read_image(&corpus().join("absent.pgm")), Err(Error::Io { .. })));
}

#[test]
fn files_round_trip_at_both_depths() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = (0..3 * 5 * 4).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
    for (channels, ext) in [(1, "pgm"), (3, "ppm")] {
        let img = Tensor::from_vec([1, channels, 5, 4], data[..channels * 20].to_vec()).unwrap();
        for (depth, bound) in [(BitDepth::Eight, 0.5 / 255.0), (BitDepth::Sixteen, 0.5 / 65535.0)] {
            let path = dir.path().join(format!("img.{ext}"));
            write_image(&path, &img, depth).unwrap();
            let back = read_image(&path).unwrap();
            assert_eq!(back.shape(), img.shape());
            assert!(back.sub(&img).unwrap().max_abs() <= bound + 1e-15);
        }
    }
}
