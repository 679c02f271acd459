pub mod bench;
pub mod distill;
pub mod genscene;
pub mod render;
pub mod tonemap_cmd;
pub mod verify_cmd;
