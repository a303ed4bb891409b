#pragma once

#include <cmath>

namespace squeezelab
{
template <typename Matrix>
void balance_matrix(Matrix &a)
{
    constexpr double radix = 2.0;
    const auto n = a.rows();
    bool done = false;
    while (!done)
    {
        done = true;
        for (decltype(a.rows()) i = 0; i < n; ++i)
        {
            double row = 0.0;
            double col = 0.0;
            for (decltype(a.rows()) j = 0; j < n; ++j)
            {
                if (j == i)
                {
                    continue;
                }
                col += std::abs(a(j, i));
                row += std::abs(a(i, j));
            }
            if (col == 0.0 || row == 0.0)
            {
                continue;
            }
            double g = row / radix;
            double f = 1.0;
            const double s = col + row;
            while (col < g)
            {
                f *= radix;
                col *= radix * radix;
            }
            g = row * radix;
            while (col > g)
            {
                f /= radix;
                col /= radix * radix;
            }
            if ((col + row) / f < 0.95 * s)
            {
                done = false;
                a.row(i) /= f;
                a.col(i) *= f;
            }
        }
    }
}

} // namespace squeezelab
