#include <math.h>
#include <stdio.h>
#include "hommax.h"

int main(void) {
    double c[3] = {0.5, 0.5, 0.5};
    HxCell *cell = NULL;
    if (hx_cell_ball(8, c, 0.25, 1.0, 1.0, &cell) != HX_STATUS_OK) return 1;
    HxTensor *t = NULL;
    if (hx_effective_tensor(cell, 1e-10, &t) != HX_STATUS_OK) return 2;
    double a[9];
    hx_tensor_get(t, a);
    if (!(a[0] > 0.5 && a[0] < 1.0) || fabs(a[1]) > 1e-12) return 3;
    if (hx_cell_ball(8, c, -1.0, 1.0, 1.0, &cell) != HX_STATUS_INVALID_ARGUMENT) return 4;
    if (hx_last_error() == NULL) return 5;
    printf("a11 = %.6f\n", a[0]);
    hx_tensor_free(t);
    hx_cell_free(cell);
    return 0;
}
