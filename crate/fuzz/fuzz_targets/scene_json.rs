#![no_main]
use libfuzzer_sys::fuzz_target;

use socialnav::scene::Scene;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = Scene::from_json_str(text, 0.1) {
        // A built scene re-serializes into something that builds again.
        let json = serde_json::to_string(&scene.to_file()).unwrap();
        let again = Scene::from_json_str(&json, 0.1).expect("round trip must rebuild");
        assert_eq!(again.obstacles.len(), scene.obstacles.len());
        assert_eq!(again.grid.free_count(), scene.grid.free_count());
    }
});
