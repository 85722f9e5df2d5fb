#pragma once

// Quadruple-loop reference convolutions. Deliberately the most literal
// translation of the definitions; no blocking, no index tricks.

#include <vector>

namespace oracle {

// x [N,Cin,H,W], w [Cout,Cin,KH,KW], b [Cout] -> [N,Cout,OH,OW]
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int N, int Cin, int H,
                                        int W, const std::vector<double>& w, int Cout, int KH,
                                        int KW, const std::vector<double>& b, int stride,
                                        int pad, int* out_h, int* out_w) {
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  *out_h = OH;
  *out_w = OW;
  std::vector<double> out(static_cast<size_t>(N) * Cout * OH * OW, 0.0);
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double s = b[co];
          for (int ci = 0; ci < Cin; ++ci)
            for (int kh = 0; kh < KH; ++kh)
              for (int kw = 0; kw < KW; ++kw) {
                int ih = oh * stride + kh - pad;
                int iw = ow * stride + kw - pad;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                s += x[((static_cast<size_t>(n) * Cin + ci) * H + ih) * W + iw] *
                     w[((static_cast<size_t>(co) * Cin + ci) * KH + kh) * KW + kw];
              }
          out[((static_cast<size_t>(n) * Cout + co) * OH + oh) * OW + ow] = s;
        }
  return out;
}

// x [N,Cin,H,W], w [Cin,Cout,KH,KW], b [Cout] -> [N,Cout,OH,OW]
inline std::vector<double> naive_conv_transpose2d(const std::vector<double>& x, int N, int Cin,
                                                  int H, int W, const std::vector<double>& w,
                                                  int Cout, int KH, int KW,
                                                  const std::vector<double>& b, int stride,
                                                  int pad, int opad, int* out_h, int* out_w) {
  const int OH = (H - 1) * stride - 2 * pad + KH + opad;
  const int OW = (W - 1) * stride - 2 * pad + KW + opad;
  *out_h = OH;
  *out_w = OW;
  std::vector<double> out(static_cast<size_t>(N) * Cout * OH * OW, 0.0);
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
          out[((static_cast<size_t>(n) * Cout + co) * OH + oh) * OW + ow] = b[co];
      for (int ci = 0; ci < Cin; ++ci)
        for (int ih = 0; ih < H; ++ih)
          for (int iw = 0; iw < W; ++iw) {
            double v = x[((static_cast<size_t>(n) * Cin + ci) * H + ih) * W + iw];
            for (int kh = 0; kh < KH; ++kh)
              for (int kw = 0; kw < KW; ++kw) {
                int oh = ih * stride - pad + kh;
                int ow = iw * stride - pad + kw;
                if (oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
                out[((static_cast<size_t>(n) * Cout + co) * OH + oh) * OW + ow] +=
                    v * w[((static_cast<size_t>(ci) * Cout + co) * KH + kh) * KW + kw];
              }
          }
    }
  return out;
}

}  // namespace oracle
