#include "spinshield/spectral.hpp"

namespace spinshield {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

double luminance(const FrameStack& f, Eigen::Index t, Eigen::Index y, Eigen::Index x) {
  if (f.channels == 1) return f.at(t, y, x);
  return kLumaR * f.at(t, y, x, 0) + kLumaG * f.at(t, y, x, 1) + kLumaB * f.at(t, y, x, 2);
}

}  // namespace

PatchSignalClip extract_patch_signals(const FrameStack& frames, const PatchGridSpec& grid, double fps) {
  if (frames.channels != 1 && frames.channels != 3)
    throw SpectralError("frames must be grayscale or 3-channel, got " + std::to_string(frames.channels) + " channels");
  if (frames.frame_count < 2) throw SpectralError("need at least 2 frames");
  if (static_cast<std::size_t>(frames.frame_count * frames.height * frames.width * frames.channels) != frames.data.size())
    throw SpectralError("frame buffer size does not match its declared shape");
  if (grid.rows < 1 || grid.cols < 1) throw SpectralError("patch grid must have positive rows and cols");

  const Roi& roi = grid.roi;
  if (roi.x < 0 || roi.y < 0 || roi.width <= 0 || roi.height <= 0 || roi.x + roi.width > frames.width ||
      roi.y + roi.height > frames.height)
    throw SpectralError("roi (" + std::to_string(roi.x) + "," + std::to_string(roi.y) + "," + std::to_string(roi.width) +
                        "x" + std::to_string(roi.height) + ") lies outside the " + std::to_string(frames.width) + "x" +
                        std::to_string(frames.height) + " frame");

  const Eigen::Index patch_w = roi.width / grid.cols;
  const Eigen::Index patch_h = roi.height / grid.rows;
  if (patch_w == 0 || patch_h == 0)
    throw SpectralError("roi " + std::to_string(roi.width) + "x" + std::to_string(roi.height) + " is smaller than the " +
                        std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " patch grid (empty patch)");

  PatchSignalClip clip{Eigen::MatrixXd(grid.patch_count(), frames.frame_count), fps};
  for (Eigen::Index r = 0; r < grid.rows; ++r) {
    const Eigen::Index y0 = roi.y + r * patch_h;
    const Eigen::Index y1 = r + 1 == grid.rows ? roi.y + roi.height : y0 + patch_h;
    for (Eigen::Index c = 0; c < grid.cols; ++c) {
      const Eigen::Index x0 = roi.x + c * patch_w;
      const Eigen::Index x1 = c + 1 == grid.cols ? roi.x + roi.width : x0 + patch_w;
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (Eigen::Index t = 0; t < frames.frame_count; ++t) {
        double sum = 0;
        for (Eigen::Index y = y0; y < y1; ++y)
          for (Eigen::Index x = x0; x < x1; ++x) sum += luminance(frames, t, y, x);
        clip.signals(r * grid.cols + c, t) = sum / count;
      }
    }
  }
  validate(clip);
  return clip;
}

}  // namespace spinshield
