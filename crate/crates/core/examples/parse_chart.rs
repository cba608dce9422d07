//! Feeds an utterance word by word and prints the chart after each word,
//! then the preferred parse as a logical form.
//!
//! cargo run --example parse_chart -- grab the mug by the top

use langmotion::chart::Chart;
use langmotion::grammar::Dictionary;

fn main() {
    let mut words: Vec<String> = std::env::args().skip(1).collect();
    if words.is_empty() {
        words = "grab the mug by the top".split(' ').map(String::from).collect();
    }
    let dict = Dictionary::shipped();
    let mut chart = Chart::new();
    for w in &words {
        let r = chart.feed_word(w, &dict);
        let best = r.best.map(|b| b.sem.to_string()).unwrap_or_else(|| "-".into());
        println!("+ {w:<12} {:?}  best: {best}", r.status);
    }
    println!();
    print!("{}", chart.dump(&dict));
    println!("combine attempts: {}", chart.combine_attempts());
}
