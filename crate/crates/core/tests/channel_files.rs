use std::fs;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ufus::io::{read_channel_file, write_channel_file, ChannelFile};
use ufus::Error;

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

#[test]
fn ten_thousand_rows_round_trip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = 10_000;
    let times: Vec<f64> = (0..rows).map(|k| k as f64 * 0.005).collect();
    let values = DMatrix::from_fn(rows, 4, |_, j| {
        let scale = 10f64.powi(rng.gen_range(-12..6));
        let v: f64 = rng.gen_range(-1.0..1.0);
        if j == 3 { v * scale } else { v }
    });
    let file = ChannelFile::new(names(&["ag1", "d3", "v2", "a5"]), times, values).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("round.csv");
    write_channel_file(&path, &file).unwrap();
    let back = read_channel_file(&path).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.len(), rows);
}

#[test]
fn header_only_file_is_empty_but_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("empty.csv");
    fs::write(&path, "t,d1,a2\n").unwrap();
    let file = read_channel_file(&path).unwrap();
    assert!(file.is_empty());
    assert_eq!(file.names, names(&["d1", "a2"]));
    assert_eq!(file.dt(), None);
    assert_eq!(file.select(&["a2"]).unwrap().shape(), (0, 1));
}

fn read_err(body: &str) -> String {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.csv");
    fs::write(&path, body).unwrap();
    match read_channel_file(&path) {
        Err(Error::ChannelFile(msg)) => msg,
        Err(e) => e.to_string(),
        Ok(_) => panic!("accepted:\n{body}"),
    }
}

#[test]
fn malformed_files_are_rejected() {
    assert!(read_err("time,d1\n0,1\n").contains("first column"));
    assert!(read_err("t,d1\n0,1\n0.01,x\n").contains("non-numeric"));
    assert!(read_err("t,d1\n0,1\n0.01,2\n0.03,3\n").contains("non-uniform"));
    assert!(read_err("t,d1\n0.01,1\n0,2\n").contains("increasing"));
    assert!(read_err("t,d1,d1\n0,1,2\n").contains("duplicate"));
    assert!(read_err("t,x1\n0,1\n").contains("bad column"));
    assert!(read_err("t,d0\n0,1\n").contains("bad column"));
}

#[test]
fn selection_is_by_name() {
    let file = ChannelFile::new(
        names(&["a4", "d2"]),
        vec![0.0, 0.1],
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
    )
    .unwrap();
    let picked = file.select(&["d2", "a4"]).unwrap();
    assert_eq!(picked, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 4.0, 3.0]));
    assert!(file.select(&["a5"]).is_err());
}
