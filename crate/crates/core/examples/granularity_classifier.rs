use linguomotor::bridge::classify_granularity;

fn main() {
    let prompts = [
        "move the arm up",
        "rotate the base 90 degrees",
        "move right_j0 to the left by 180 degrees",
        "move forward",
        "move backward for 2 seconds",
        "move along x-axis with a speed of 0.05 m/s for 5 seconds",
        "move the arm to position_x = 0.46, position_y = 0.15, and position_z=0.5",
    ];
    for p in prompts {
        let label = classify_granularity(p);
        let found: Vec<String> = label
            .quantities
            .iter()
            .map(|q| format!("{} {}", q.value, q.unit))
            .collect();
        println!("{:<13} {p:?} {}", label.label.to_string(), found.join(", "));
    }
}
