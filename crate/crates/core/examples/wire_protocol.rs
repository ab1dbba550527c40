//! Frame records on the wire: one JSON object per line, reals at 6 decimals.

use gauzetrack::protocol::ProtocolError;
use gauzetrack::{parse_frame, serialize_frame, validate_stream, BBox, Camera, Detection, FrameObservation};

fn main() {
    let frame = FrameObservation::new(
        Camera::In,
        42,
        2800,
        vec![
            Detection::gauze(0.912345678, BBox::new(0.1, 0.1, 0.3, 0.35)),
            Detection::hand(0.77, BBox::new(0.5, 0.4, 0.9, 0.95)),
        ],
    );
    let line = serialize_frame(&frame);
    println!("{line}");

    let back = parse_frame(&line).expect("own output parses");
    println!("confidence after round trip: {}", back.detections[0].confidence);
    assert_eq!(serialize_frame(&back), line);

    let bad = [
        r#"{"camera":"IN","frame_index":1}"#,
        r#"{"camera":"SIDE","frame_index":1,"timestamp_ms":0,"detections":[]}"#,
        r#"{"camera":"IN","frame_index":1,"timestamp_ms":0,"detections":[{"class_id":0,"confidence":1.5,"bbox":[0,0,1,1]}]}"#,
    ];
    for text in bad {
        match parse_frame(text) {
            Ok(_) => println!("accepted?! {text}"),
            Err(e @ ProtocolError::InvalidField { .. }) => println!("invalid field: {e}"),
            Err(e) => println!("rejected: {e}"),
        }
    }

    // index 3 repeats a timestamp going backwards
    let frames: Vec<_> = [(0, 0), (1, 66), (2, 133), (3, 120), (4, 266)]
        .into_iter()
        .map(|(i, t)| FrameObservation::empty(Camera::Out, i, t))
        .collect();
    for v in validate_stream(&frames, Camera::Out) {
        println!("stream violation: {v:?}");
    }
}
