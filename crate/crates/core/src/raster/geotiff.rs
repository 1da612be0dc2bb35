//! GeoTIFF reading and writing on top of the `tiff` crate.
//!
//! Bands are written as interleaved 32-bit floats in a single strip. The
//! affine is stored as `ModelTransformationTag`, plus pixel scale and tie
//! point when the transform has no rotation terms. Band labels travel in
//! `ImageDescription` as a JSON array.

use std::fs::File;
use std::io::{BufReader, Cursor};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::TiffEncoder;
use tiff::tags::Tag;

use super::{default_label, AffineTransform, BandPlane, RasterGrid};
use crate::error::{Error, Result};

const GT_RASTER_TYPE_GEO_KEY: u16 = 1025;
const RASTER_PIXEL_IS_AREA: u16 = 1;

pub(super) fn read(path: &Path) -> Result<RasterGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(|e| Error::format(path, e))?;
    let (width, height) = decoder.dimensions().map_err(|e| Error::format(path, e))?;
    let (width, height) = (width as usize, height as usize);

    let samples = decoder
        .find_tag_unsigned::<u16>(Tag::SamplesPerPixel)
        .map_err(|e| Error::format(path, e))?
        .unwrap_or(1) as usize;
    let planar = decoder
        .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
        .map_err(|e| Error::format(path, e))?
        .unwrap_or(1);
    if planar != 1 && samples > 1 {
        return Err(Error::format(
            path,
            "planar-separate sample layout is not supported",
        ));
    }

    let transform = read_transform(&mut decoder)
        .map_err(|e| Error::format(path, e))?
        .ok_or_else(|| Error::format(path, "missing geotransform tags"))?;

    let description = decoder
        .find_tag(Tag::ImageDescription)
        .ok()
        .flatten()
        .and_then(|v| v.into_string().ok());

    let data = decoder.read_image().map_err(|e| Error::format(path, e))?;
    let interleaved = to_f64(data);
    if interleaved.len() != width * height * samples {
        return Err(Error::format(
            path,
            format!(
                "decoded {} samples, expected {}x{}x{}",
                interleaved.len(),
                width,
                height,
                samples
            ),
        ));
    }

    let mut planes = vec![Vec::with_capacity(width * height); samples];
    for pixel in interleaved.chunks_exact(samples) {
        for (plane, &v) in planes.iter_mut().zip(pixel) {
            plane.push(v);
        }
    }
    let bands = planes
        .into_iter()
        .map(BandPlane::new)
        .collect::<Result<Vec<_>>>()?;

    let labels = description
        .and_then(|d| serde_json::from_str::<Vec<String>>(d.trim_end_matches('\0')).ok())
        .filter(|l| l.len() == samples)
        .unwrap_or_else(|| (0..samples).map(default_label).collect());

    RasterGrid::new(width, height, bands, transform, labels)
}

fn read_transform<R: std::io::Read + std::io::Seek>(
    decoder: &mut Decoder<R>,
) -> tiff::TiffResult<Option<AffineTransform>> {
    if let Some(m) = decoder.find_tag(Tag::ModelTransformationTag)? {
        let m = m.into_f64_vec()?;
        if m.len() >= 8 {
            return Ok(Some(AffineTransform::new([
                m[3], m[0], m[1], m[7], m[4], m[5],
            ])));
        }
    }
    let scale = decoder.find_tag(Tag::ModelPixelScaleTag)?;
    let tie = decoder.find_tag(Tag::ModelTiepointTag)?;
    match (scale, tie) {
        (Some(scale), Some(tie)) => {
            let scale = scale.into_f64_vec()?;
            let tie = tie.into_f64_vec()?;
            if scale.len() < 2 || tie.len() < 6 {
                return Ok(None);
            }
            let (sx, sy) = (scale[0], -scale[1]);
            let (i, j, x, y) = (tie[0], tie[1], tie[3], tie[4]);
            Ok(Some(AffineTransform::new([
                x - i * sx,
                sx,
                0.0,
                y - j * sy,
                0.0,
                sy,
            ])))
        }
        _ => Ok(None),
    }
}

fn to_f64(data: DecodingResult) -> Vec<f64> {
    match data {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::F16(v) => v.into_iter().map(|x| x.to_f64()).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f64).collect(),
    }
}

pub(super) fn encode(grid: &RasterGrid) -> Result<Vec<u8>> {
    let tiff_err = |e: tiff::TiffError| Error::InvalidRaster(format!("GeoTIFF encoding: {e}"));
    let (width, height) = (grid.width() as u32, grid.height() as u32);
    let nbands = grid.bands().len();
    if nbands == 0 {
        return Err(Error::TooFewBands(0));
    }

    let mut pixels = Vec::with_capacity(grid.width() * grid.height() * nbands);
    for i in 0..grid.width() * grid.height() {
        for band in grid.bands() {
            pixels.push(band.values()[i] as f32);
        }
    }

    let mut buf = Cursor::new(Vec::new());
    {
        let mut encoder = TiffEncoder::new(&mut buf).map_err(tiff_err)?;
        let mut dir = encoder.image_directory().map_err(tiff_err)?;
        dir.write_tag(Tag::ImageWidth, width).map_err(tiff_err)?;
        dir.write_tag(Tag::ImageLength, height).map_err(tiff_err)?;
        dir.write_tag(Tag::BitsPerSample, &vec![32u16; nbands][..])
            .map_err(tiff_err)?;
        dir.write_tag(Tag::Compression, 1u16).map_err(tiff_err)?;
        dir.write_tag(Tag::PhotometricInterpretation, 1u16)
            .map_err(tiff_err)?;
        dir.write_tag(Tag::SamplesPerPixel, nbands as u16)
            .map_err(tiff_err)?;
        dir.write_tag(Tag::SampleFormat, &vec![3u16; nbands][..])
            .map_err(tiff_err)?;
        dir.write_tag(Tag::PlanarConfiguration, 1u16)
            .map_err(tiff_err)?;
        dir.write_tag(Tag::RowsPerStrip, height).map_err(tiff_err)?;
        if nbands > 1 {
            dir.write_tag(Tag::ExtraSamples, &vec![0u16; nbands - 1][..])
                .map_err(tiff_err)?;
        }

        let labels = serde_json::to_string(grid.band_labels()).expect("labels serialize");
        dir.write_tag(Tag::ImageDescription, labels.as_str())
            .map_err(tiff_err)?;

        let t = grid.geotransform();
        let matrix = [
            t.b, t.c, 0.0, t.a, //
            t.e, t.f, 0.0, t.d, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ];
        dir.write_tag(Tag::ModelTransformationTag, &matrix[..])
            .map_err(tiff_err)?;
        if t.c == 0.0 && t.e == 0.0 {
            dir.write_tag(Tag::ModelPixelScaleTag, &[t.b, -t.f, 0.0][..])
                .map_err(tiff_err)?;
            dir.write_tag(Tag::ModelTiepointTag, &[0.0, 0.0, 0.0, t.a, t.d, 0.0][..])
                .map_err(tiff_err)?;
        }
        let geokeys = [
            1u16,
            1,
            0,
            1,
            GT_RASTER_TYPE_GEO_KEY,
            0,
            1,
            RASTER_PIXEL_IS_AREA,
        ];
        dir.write_tag(Tag::GeoKeyDirectoryTag, &geokeys[..])
            .map_err(tiff_err)?;

        let offset = dir.write_data(&pixels[..]).map_err(tiff_err)?;
        dir.write_tag(Tag::StripOffsets, offset as u32)
            .map_err(tiff_err)?;
        dir.write_tag(Tag::StripByteCounts, (pixels.len() * 4) as u32)
            .map_err(tiff_err)?;
        dir.finish().map_err(tiff_err)?;
    }
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{load_raster, save_raster, RasterFormat};

    fn sample_grid(transform: AffineTransform) -> RasterGrid {
        let (w, h) = (5, 4);
        let bands = (0..4)
            .map(|b| {
                BandPlane::new((0..w * h).map(|i| (i * (b + 1)) as f64 * 0.125).collect()).unwrap()
            })
            .collect();
        RasterGrid::with_default_labels(w, h, bands, transform).unwrap()
    }

    #[test]
    fn write_then_read_preserves_values_and_transform() {
        let dir = tempfile::tempdir().unwrap();
        for t in [
            AffineTransform::north_up(500_000.0, 5_200_000.0, 3.7),
            AffineTransform::new([10.0, 2.0, 0.5, 20.0, -0.25, -2.0]),
        ] {
            let grid = sample_grid(t);
            let path = dir.path().join("scene.tif");
            save_raster(&grid, &path, RasterFormat::GeoTiff).unwrap();
            let back = load_raster(&path, RasterFormat::GeoTiff).unwrap();
            assert_eq!(back, grid);
        }
    }

    #[test]
    fn float32_precision_on_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = AffineTransform::north_up(0.0, 0.0, 1.0);
        let vals: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 + 1e-9).collect();
        let bands = (0..3)
            .map(|_| BandPlane::new(vals.clone()).unwrap())
            .collect();
        let grid = RasterGrid::with_default_labels(4, 3, bands, t).unwrap();
        let path = dir.path().join("f.tiff");
        save_raster(&grid, &path, RasterFormat::GeoTiff).unwrap();
        let back = load_raster(&path, RasterFormat::GeoTiff).unwrap();
        for (a, b) in grid.bands().iter().zip(back.bands()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(*y, *x as f32 as f64);
            }
        }
    }

    #[test]
    fn missing_geotransform_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.tif");
        let file = File::create(&path).unwrap();
        let mut enc = TiffEncoder::new(file).unwrap();
        let data = vec![0f32; 3 * 2 * 2];
        enc.write_image::<tiff::encoder::colortype::RGB32Float>(2, 2, &data)
            .unwrap();
        let err = load_raster(&path, RasterFormat::GeoTiff).unwrap_err();
        assert!(err.to_string().contains("geotransform"), "{err}");
    }

    #[test]
    fn two_band_tiff_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut grid = sample_grid(AffineTransform::north_up(0.0, 0.0, 1.0));
        grid.bands.truncate(2);
        grid.band_labels.truncate(2);
        let path = dir.path().join("two.tif");
        save_raster(&grid, &path, RasterFormat::GeoTiff).unwrap();
        assert!(matches!(
            load_raster(&path, RasterFormat::GeoTiff),
            Err(Error::TooFewBands(2))
        ));
    }
}
