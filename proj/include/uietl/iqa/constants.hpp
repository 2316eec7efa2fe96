#pragma once

// Published coefficients of the classical underwater quality metrics.
namespace uietl::iqa::constants {

// UIQM = c1 * UICM + c2 * UISM + c3 * UIConM (Panetta, Gao & Agaian, 2016).
inline constexpr double kUiqmC1 = 0.0282;
inline constexpr double kUiqmC2 = 0.2953;
inline constexpr double kUiqmC3 = 3.5753;
// UICM = kUicmMean * |trimmed mean| + kUicmSpread * sqrt(variance)
inline constexpr double kUicmMean = -0.0268;
inline constexpr double kUicmSpread = 0.1586;
inline constexpr double kUicmTrim = 0.1;  // symmetric alpha-trimming fraction
// UISM channel weights (R, G, B).
inline constexpr double kUismLambda[3] = {0.299, 0.587, 0.114};
// Block size of the EME / AMEE measures, in pixels.
inline constexpr int kUiqmBlock = 8;

// UCIQE = c1 * sigma_chroma + c2 * luminance contrast + c3 * mean saturation
// (Yang & Sowmya, 2015). Lab coordinates are scaled by 1/100.
inline constexpr double kUciqeC1 = 0.4680;
inline constexpr double kUciqeC2 = 0.2745;
inline constexpr double kUciqeC3 = 0.2576;
inline constexpr double kUciqeTail = 0.01;  // top/bottom fraction for contrast

// SSIM (Wang et al., 2004).
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;

// Rec. 601 luma.
inline constexpr double kLuma[3] = {0.299, 0.587, 0.114};

}  // namespace uietl::iqa::constants
