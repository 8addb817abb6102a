#include "htc/nn.hpp"

namespace htc {

template class Dense<float>;
template class Dense<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class Mlp<float>;
template class Mlp<double>;
template class ResCnn<float>;
template class ResCnn<double>;

}  // namespace htc
