#include <stdio.h>
#include "hawkes.h"

int main(void) {
    double m[4] = {0.3, 0.4, 0.2, 0.1};
    double r = 0.0;
    int converged = 0;
    if (hawkes_spectral_radius(m, 2, &r, &converged) != HAWKES_STATUS_OK) {
        fprintf(stderr, "%s\n", hawkes_last_error_message());
        return 1;
    }
    printf("hawkes %s: spectral radius %.12f (converged=%d)\n", hawkes_version(), r, converged);
    return 0;
}
