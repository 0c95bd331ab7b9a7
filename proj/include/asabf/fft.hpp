#ifndef ASABF_FFT_HPP_
#define ASABF_FFT_HPP_

#include <complex>
#include <cstddef>
#include <vector>

namespace asabf {
namespace fft {

// In-place DFT. Radix-2 iterative for powers of two, direct evaluation
// otherwise (sizes used here are powers of two). `inverse` applies the 1/n
// factor.
void transform(std::vector<std::complex<double>>& a, bool inverse);

// One-sided spectrum of a real signal, n even: n/2 + 1 bins.
std::vector<std::complex<double>> rfft(const double* x, std::size_t n);

// Inverse of rfft. The imaginary parts of the DC and Nyquist bins are
// ignored (treated as zero).
std::vector<double> irfft(const std::complex<double>* spec, std::size_t n);

// Full linear convolution, length a+b-1.
std::vector<double> convolve(const std::vector<double>& a,
                             const std::vector<double>& b);

}  // namespace fft
}  // namespace asabf

#endif  // ASABF_FFT_HPP_
