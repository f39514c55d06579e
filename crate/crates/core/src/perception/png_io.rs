//! Minimal PNG helpers over the `png` crate.

use std::io::Cursor;

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    Gray8(Vec<u8>),
    Gray16(Vec<u16>),
    Rgb8(Vec<u8>),
    Rgba8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub width: u32,
    pub height: u32,
    pub pixels: Pixels,
    pub text: Vec<(String, String)>,
}

fn encode(
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
    text: &[(&str, &str)],
) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        enc.set_compression(png::Compression::Fast);
        for (k, v) in text {
            enc.add_itxt_chunk(k.to_string(), v.to_string()).expect("valid iTXt keyword");
        }
        let mut w = enc.write_header().expect("in-memory png header");
        w.write_image_data(data).expect("in-memory png data");
    }
    out
}

pub fn encode_gray8(width: u32, height: u32, data: &[u8]) -> Vec<u8> {
    encode(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, data, &[])
}

pub fn encode_gray16(width: u32, height: u32, data: &[u16]) -> Vec<u8> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes, &[])
}

pub fn encode_rgb8(width: u32, height: u32, data: &[u8], text: &[(&str, &str)]) -> Vec<u8> {
    encode(width, height, png::ColorType::Rgb, png::BitDepth::Eight, data, text)
}

pub fn decode(bytes: &[u8]) -> Result<Decoded, String> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("image too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    buf.truncate(info.buffer_size());
    reader.finish().map_err(|e| e.to_string())?;
    let text = reader
        .info()
        .utf8_text
        .iter()
        .filter_map(|c| c.get_text().ok().map(|t| (c.keyword.clone(), t)))
        .collect();
    let pixels = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => {
            Pixels::Gray16(buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect())
        }
        (png::ColorType::Grayscale, png::BitDepth::Eight) => Pixels::Gray8(buf),
        (png::ColorType::Rgb, png::BitDepth::Eight) => Pixels::Rgb8(buf),
        (png::ColorType::Rgba, png::BitDepth::Eight) => Pixels::Rgba8(buf),
        (c, d) => return Err(format!("unsupported png layout {c:?}/{d:?}")),
    };
    Ok(Decoded {
        width: info.width,
        height: info.height,
        pixels,
        text,
    })
}

/// Value of the first iTXt chunk with `keyword`.
pub fn text_chunk(bytes: &[u8], keyword: &str) -> Option<String> {
    decode(bytes).ok()?.text.into_iter().find(|(k, _)| k == keyword).map(|(_, v)| v)
}
