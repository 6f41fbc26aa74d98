//! Sentence segmentation and n-gram windows over one document.
//!
//! cargo run --example segment_windows

use ski::corpus::{segment, windows, windows_with_layout, Document, WindowLayout};

fn main() -> ski::Result<()> {
    let doc = Document {
        id: "vivaldi".into(),
        title: "Antonio Vivaldi".into(),
        text: "Antonio Vivaldi (4 March 1678\u{a0}\u{2013} 28 July 1741) was a composer. \
               Born in Venice, he worked for the Ospedale della Pietà, e.g. as maestro di violino. \
               He wrote more than 500 concertos. His best-known work is \"The Four Seasons\"."
            .into(),
    };
    let sentences = segment(&doc)?;
    for s in &sentences {
        println!("[{}] {}", s.index, s.text);
    }
    for n in 1..=3 {
        let sliding = windows(&sentences, n)?;
        let tiled = windows_with_layout(&sentences, n, WindowLayout::Tiled)?;
        println!("n={n}: {} sliding windows, {} tiled", sliding.len(), tiled.len());
        for w in &sliding {
            println!("  {}..{}  {}", w.start, w.end(), w.text());
        }
    }
    Ok(())
}
